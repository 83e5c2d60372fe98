#ifndef MESHLEARN_MESH_HPP
#define MESHLEARN_MESH_HPP

/*
 Mesh arc descriptors.

 Each voxel j is the center of a star mesh whose arcs connect it to its p
 nearest spatial neighbors. At sample i the center intensity is modelled as a
 linear combination of the neighbor intensities,

     v(i, j) = sum_k a(i, j, k) * v(i, n_k(j)) + e(i, j),

 and the arc weights a(i, j, .) minimize e^2. A single sample gives one
 equation in p unknowns, so the default estimator returns the minimum-norm
 solution a = c x / |x|^2. Ridge and multi-sample windows give well-posed
 alternatives.

 MAD layout: weight a(i, j, k) sits at column j * p + k of row i.
*/

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshlearn/core.hpp"
#include "meshlearn/dataset.hpp"
#include "meshlearn/neighborhood.hpp"

namespace meshlearn {

enum class Estimator { MinNorm, Ridge };

inline std::string to_string(Estimator e) { return e == Estimator::MinNorm ? "min-norm" : "ridge"; }

inline Estimator parse_estimator(const std::string& s) {
  if (s == "min-norm") return Estimator::MinNorm;
  if (s == "ridge") return Estimator::Ridge;
  throw ArgumentError("unknown estimator '" + s + "' (expected min-norm or ridge)");
}

struct MeshConfig {
  std::size_t p = 6;  // 0 = raw intensities
  Estimator estimator = Estimator::MinNorm;
  double ridge_lambda = 0.0;
  std::size_t window = 1;

  void validate() const {
    if (window < 1) throw ArgumentError("mesh window must be >= 1");
    if (estimator == Estimator::Ridge && !(ridge_lambda > 0.0 && std::isfinite(ridge_lambda)))
      throw ArgumentError("ridge estimator needs lambda > 0");
    if (ridge_lambda < 0.0) throw ArgumentError("ridge lambda must be non-negative");
  }
};

inline nlohmann::json to_json(const MeshConfig& c) {
  return {{"p", c.p}, {"estimator", to_string(c.estimator)}, {"ridge_lambda", c.ridge_lambda}, {"window", c.window}};
}

struct ArcWeightEstimate {
  std::vector<double> weights;
  double residual = 0.0;  // RMS of the fitted equations
};

/// Arc weights of one star mesh.
///
/// `center` holds the center intensity at each of w pooled samples and
/// `neighbors` (w x p) the corresponding neighbor intensities.
inline ArcWeightEstimate estimate_arc_weights(std::span<const double> center, const Matrix& neighbors,
                                              const MeshConfig& cfg) {
  cfg.validate();
  const auto w = static_cast<Index>(center.size());
  const auto p = neighbors.cols();
  if (w == 0 || neighbors.rows() != w)
    throw ArgumentError("center has " + std::to_string(w) + " samples, neighbor matrix has " +
                        std::to_string(neighbors.rows()) + " rows");
  if (p < 1) throw ArgumentError("arc weight estimation needs p >= 1");
  const Eigen::Map<const Vector> c(center.data(), w);
  if (!c.allFinite() || !neighbors.allFinite()) throw DataError("non-finite intensity in mesh estimate");

  ArcWeightEstimate est;
  est.weights.assign(static_cast<std::size_t>(p), 0.0);
  Eigen::Map<Vector> a(est.weights.data(), p);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w));

  if (neighbors.isZero(0.0)) {
    est.residual = c.norm() * scale;
    return est;
  }

  if (cfg.estimator == Estimator::MinNorm && w == 1) {
    // One equation c = x . a: the minimum-norm solution is c x / |x|^2 and fits exactly.
    const auto x = neighbors.row(0);
    a = (c(0) / x.squaredNorm()) * x.transpose();
    est.residual = 0.0;
    return est;
  }

  if (cfg.estimator == Estimator::MinNorm) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(neighbors);
    a = cod.solve(c);
  } else {
    Eigen::MatrixXd gram = neighbors.transpose() * neighbors;
    gram.diagonal().array() += cfg.ridge_lambda;
    a = gram.ldlt().solve(neighbors.transpose() * c);
  }
  est.residual = (neighbors * a - c).norm() * scale;
  return est;
}

struct MadMatrix {
  Matrix values;                         // rows x (N * p)
  std::size_t p = 0;
  std::vector<std::size_t> source_rows;  // dataset sample behind each row
  MeshConfig config;
};

namespace detail {

/// Pooling groups: non-overlapping runs of `window` consecutive same-run samples,
/// a trailing partial group is dropped. Groups are ordered by their first sample.
inline std::vector<std::vector<std::size_t>> pooling_groups(const std::vector<int>& run_ids, std::size_t window) {
  std::vector<std::vector<std::size_t>> groups;
  if (window == 1) {
    groups.reserve(run_ids.size());
    for (std::size_t i = 0; i < run_ids.size(); ++i) groups.push_back({i});
    return groups;
  }
  std::map<int, std::vector<std::size_t>> open;
  for (std::size_t i = 0; i < run_ids.size(); ++i) {
    auto& g = open[run_ids[i]];
    g.push_back(i);
    if (g.size() == window) {
      groups.push_back(std::move(g));
      g.clear();
    }
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

}  // namespace detail

inline MadMatrix extract_mad(const Dataset& d, const NeighborhoodTable& table, const MeshConfig& cfg) {
  cfg.validate();
  if (cfg.p < 1) throw ArgumentError("extract_mad needs p >= 1");
  if (table.n_voxels() != d.n_voxels())
    throw ArgumentError("neighborhood table has " + std::to_string(table.n_voxels()) + " voxels, dataset has " +
                        std::to_string(d.n_voxels()));
  if (table.order() != cfg.p)
    throw ArgumentError("neighborhood table order " + std::to_string(table.order()) + " != mesh order " +
                        std::to_string(cfg.p));

  const auto n = d.n_voxels();
  const auto p = cfg.p;
  const auto groups = detail::pooling_groups(d.run_ids, cfg.window);

  MadMatrix mad;
  mad.p = p;
  mad.config = cfg;
  mad.values.resize(static_cast<Index>(groups.size()), static_cast<Index>(n * p));
  mad.source_rows.reserve(groups.size());

  const auto w = static_cast<Index>(cfg.window);
  std::vector<double> center(cfg.window);
  Matrix nbr(w, static_cast<Index>(p));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& rows = groups[g];
    mad.source_rows.push_back(rows.front());
    for (std::size_t j = 0; j < n; ++j) {
      const auto nb = table.row(j);
      for (Index r = 0; r < w; ++r) {
        const auto i = static_cast<Index>(rows[static_cast<std::size_t>(r)]);
        center[static_cast<std::size_t>(r)] = d.intensities(i, static_cast<Index>(j));
        for (std::size_t k = 0; k < p; ++k) nbr(r, static_cast<Index>(k)) = d.intensities(i, static_cast<Index>(nb[k]));
      }
      const auto est = estimate_arc_weights(center, nbr, cfg);
      for (std::size_t k = 0; k < p; ++k) mad.values(static_cast<Index>(g), static_cast<Index>(j * p + k)) = est.weights[k];
    }
  }
  return mad;
}

enum class FeatureMode { Raw, Mad };

/// Features for downstream classifiers, with the dataset row behind each feature row.
struct FeatureMatrix {
  Matrix values;
  std::vector<std::size_t> source_rows;
};

/// Raw intensities when mode is Raw or p == 0; MAD otherwise. `table` may be
/// passed to reuse a precomputed neighborhood.
inline FeatureMatrix features_for(FeatureMode mode, const Dataset& d, const MeshConfig& cfg,
                                  const NeighborhoodTable* table = nullptr) {
  if (mode == FeatureMode::Raw || cfg.p == 0) {
    FeatureMatrix f{d.intensities, std::vector<std::size_t>(d.n_samples())};
    std::iota(f.source_rows.begin(), f.source_rows.end(), std::size_t{0});
    return f;
  }
  MadMatrix mad;
  if (table && table->order() == cfg.p) {
    mad = extract_mad(d, *table, cfg);
  } else {
    mad = extract_mad(d, build_neighborhood_table(d.coords, cfg.p), cfg);
  }
  return {std::move(mad.values), std::move(mad.source_rows)};
}

// ---------------------------------------------------------------------------
// MAD files

inline nlohmann::json mad_header(const MadMatrix& mad) {
  return {{"rows", mad.values.rows()},
          {"cols", mad.values.cols()},
          {"p", mad.p},
          {"estimator", to_string(mad.config.estimator)},
          {"window", mad.config.window}};
}

/// mad.bin: one JSON header line, then rows*cols little-endian float64, row-major.
/// `extra` keys are merged into the JSON header line.
inline void write_mad_bin(const MadMatrix& mad, const std::filesystem::path& path,
                          const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  auto header = mad_header(mad);
  for (const auto& [k, v] : extra.items()) header[k] = v;
  out << header.dump() << '\n';
  const auto count = static_cast<std::size_t>(mad.values.size());
  std::vector<std::uint64_t> words(count);
  std::memcpy(words.data(), mad.values.data(), count * sizeof(double));
  if constexpr (std::endian::native == std::endian::big)
    for (auto& wd : words) wd = __builtin_bswap64(wd);
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw DataError("write failed for " + path.string());
}

struct MadFile {
  nlohmann::json header;
  Matrix values;
};

inline MadFile read_mad_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  MadFile f;
  try {
    f.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.filename().string() + ": bad header: " + e.what());
  }
  const auto rows = f.header.at("rows").get<Index>();
  const auto cols = f.header.at("cols").get<Index>();
  const auto count = static_cast<std::size_t>(rows * cols);
  std::vector<std::uint64_t> words(count);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw DataError(path.filename().string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.filename().string() + ": trailing bytes");
  if constexpr (std::endian::native == std::endian::big)
    for (auto& wd : words) wd = __builtin_bswap64(wd);
  f.values.resize(rows, cols);
  std::memcpy(f.values.data(), words.data(), count * sizeof(double));
  return f;
}

inline void write_mad_csv(const MadMatrix& mad, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (Index i = 0; i < mad.values.rows(); ++i) {
    for (Index j = 0; j < mad.values.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(mad.values(i, j));
    }
    out << '\n';
  }
}

}  // namespace meshlearn

#endif  // MESHLEARN_MESH_HPP
