#ifndef MESHLEARN_SYNTHGEN_HPP
#define MESHLEARN_SYNTHGEN_HPP

/*
 Synthetic voxel datasets whose classes differ only in local linear structure.

 Construction, on a gx x gy x gz unit grid:

   1. p_gen-nearest neighbor table of the grid.
   2. Per class c, a weight pattern W_c: p_gen Gaussian weights per voxel,
      each row rescaled to unit l2 norm.
   3. Per sample of class c, a base field b = s * a where
        s = sign of white noise Gaussian-smoothed with width `smoothness`
            (sign-coherent patches, so star meshes see locally consistent signs)
        a = exp(amplitude_spread * z), z a unit-variance field smoothed with
            width `amplitude_smoothness` (log-normal gain that varies across
            the volume)
      Each voxel then takes the W_c-weighted sum of its neighbors' base values
      plus N(0, noise_sigma^2) noise.
   4. Marginal matching: within each class every voxel is standardized to
      mean 0 and variance 1, so per-voxel intensity distributions carry no
      class information.

 Labels cycle through the classes within each run. Each sample draws from its
 own generator seeded by (seed, sample index), so output is reproducible.
*/

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshlearn/dataset.hpp"
#include "meshlearn/neighborhood.hpp"

namespace meshlearn {

struct SynthConfig {
  std::size_t gx = 6, gy = 6, gz = 6;
  std::size_t n_classes = 10;
  std::size_t n_runs = 8;
  std::size_t trials_per_run = 30;
  std::size_t p_gen = 6;
  double noise_sigma = 0.1;
  double smoothness = 0.55;
  double amplitude_spread = 1.5;
  double amplitude_smoothness = 1.0;
  std::uint64_t seed = 0;

  std::size_t n_voxels() const { return gx * gy * gz; }

  void validate() const {
    if (gx < 1 || gy < 1 || gz < 1) throw ArgumentError("synth grid dimensions must be >= 1");
    if (p_gen < 1) throw ArgumentError("synth p_gen must be >= 1");
    if (n_voxels() < p_gen + 1) throw ArgumentError("synth grid needs at least p_gen + 1 voxels");
    if (n_classes < 2) throw ArgumentError("synth n_classes must be >= 2");
    if (n_runs < 2) throw ArgumentError("synth n_runs must be >= 2");
    if (trials_per_run < 1) throw ArgumentError("synth trials_per_run must be >= 1");
    for (double v : {noise_sigma, smoothness, amplitude_spread, amplitude_smoothness})
      if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("synth noise and smoothing parameters must be >= 0");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"grid", {c.gx, c.gy, c.gz}},
          {"n_classes", c.n_classes},
          {"n_runs", c.n_runs},
          {"trials_per_run", c.trials_per_run},
          {"p_gen", c.p_gen},
          {"noise_sigma", c.noise_sigma},
          {"smoothness", c.smoothness},
          {"amplitude_spread", c.amplitude_spread},
          {"amplitude_smoothness", c.amplitude_smoothness},
          {"seed", c.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"grid", "n_classes", "n_runs", "trials_per_run", "p_gen", "noise_sigma",
                                              "smoothness", "amplitude_spread", "amplitude_smoothness", "seed"};
  if (!j.is_object()) throw DataError("synth config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw DataError("synth config: unknown key '" + k + "'");
  SynthConfig c;
  try {
    if (j.contains("grid")) {
      const auto g = j.at("grid").get<std::vector<std::size_t>>();
      if (g.size() != 3) throw DataError("synth config: grid needs 3 entries");
      c.gx = g[0];
      c.gy = g[1];
      c.gz = g[2];
    }
    c.n_classes = j.value("n_classes", c.n_classes);
    c.n_runs = j.value("n_runs", c.n_runs);
    c.trials_per_run = j.value("trials_per_run", c.trials_per_run);
    c.p_gen = j.value("p_gen", c.p_gen);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.smoothness = j.value("smoothness", c.smoothness);
    c.amplitude_spread = j.value("amplitude_spread", c.amplitude_spread);
    c.amplitude_smoothness = j.value("amplitude_smoothness", c.amplitude_smoothness);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace detail {
inline std::uint32_t seed_lo(std::uint64_t s) { return static_cast<std::uint32_t>(s); }
inline std::uint32_t seed_hi(std::uint64_t s) { return static_cast<std::uint32_t>(s >> 32); }
}  // namespace detail

namespace synth {

/// Separable Gaussian smoothing of a gx*gy*gz field (x slowest, z fastest),
/// kernel truncated at 4 sigma, edge voxels replicated.
inline std::vector<double> smooth(std::vector<double> f, std::size_t gx, std::size_t gy, std::size_t gz,
                                  double sigma) {
  if (sigma <= 0.0) return f;
  const auto radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int o = -radius; o <= radius; ++o) total += kernel[static_cast<std::size_t>(o + radius)] = std::exp(-0.5 * o * o / (sigma * sigma));
  for (auto& k : kernel) k /= total;

  const std::size_t dims[3] = {gx, gy, gz};
  const std::size_t strides[3] = {gy * gz, gz, 1};
  std::vector<double> out(f.size());
  for (int axis = 0; axis < 3; ++axis) {
    const auto len = static_cast<int>(dims[axis]);
    const auto stride = strides[axis];
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto pos = static_cast<int>((i / stride) % dims[axis]);
      const auto base = i - static_cast<std::size_t>(pos) * stride;
      double acc = 0.0;
      for (int o = -radius; o <= radius; ++o) {
        const int q = std::clamp(pos + o, 0, len - 1);
        acc += kernel[static_cast<std::size_t>(o + radius)] * f[base + static_cast<std::size_t>(q) * stride];
      }
      out[i] = acc;
    }
    f.swap(out);
  }
  return f;
}

inline std::vector<Coord> grid_coords(std::size_t gx, std::size_t gy, std::size_t gz) {
  std::vector<Coord> c;
  c.reserve(gx * gy * gz);
  for (std::size_t x = 0; x < gx; ++x)
    for (std::size_t y = 0; y < gy; ++y)
      for (std::size_t z = 0; z < gz; ++z)
        c.push_back({static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)});
  return c;
}

}  // namespace synth

inline Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto n = cfg.n_voxels();
  const auto p = cfg.p_gen;
  const auto c_count = cfg.n_classes;
  const auto m = cfg.n_runs * cfg.trials_per_run;

  Dataset d;
  d.coords = synth::grid_coords(cfg.gx, cfg.gy, cfg.gz);
  for (std::size_t c = 0; c < c_count; ++c) d.class_names.push_back("class_" + std::to_string(c));
  const auto table = build_neighborhood_table(d.coords, p);

  // Class weight patterns.
  std::vector<Matrix> weights(c_count, Matrix(static_cast<Index>(n), static_cast<Index>(p)));
  {
    std::seed_seq ss{detail::seed_lo(cfg.seed), detail::seed_hi(cfg.seed), 0u};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> normal;
    for (auto& w : weights)
      for (Index j = 0; j < w.rows(); ++j) {
        do {
          for (Index k = 0; k < w.cols(); ++k) w(j, k) = normal(rng);
        } while (w.row(j).norm() == 0.0);
        w.row(j).normalize();
      }
  }

  d.intensities.resize(static_cast<Index>(m), static_cast<Index>(n));
  d.labels.resize(m);
  d.run_ids.resize(m);
  std::vector<double> field(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto run = i / cfg.trials_per_run;
    const auto trial = i % cfg.trials_per_run;
    const auto cls = trial % c_count;
    d.run_ids[i] = static_cast<int>(run);
    d.labels[i] = static_cast<int>(cls);

    std::seed_seq ss{detail::seed_lo(cfg.seed), detail::seed_hi(cfg.seed), 1u, static_cast<std::uint32_t>(i),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32)};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> normal;

    for (auto& v : field) v = normal(rng);
    const auto sign = synth::smooth(field, cfg.gx, cfg.gy, cfg.gz, cfg.smoothness);
    for (auto& v : field) v = normal(rng);
    auto gain = synth::smooth(field, cfg.gx, cfg.gy, cfg.gz, cfg.amplitude_smoothness);
    {
      const Eigen::Map<Vector> g(gain.data(), static_cast<Index>(n));
      const double mu = g.mean();
      const double sd = std::sqrt((g.array() - mu).square().mean());
      for (auto& v : gain) v = std::exp(cfg.amplitude_spread * (sd > 0 ? (v - mu) / sd : 0.0));
    }
    std::vector<double> base(n);
    for (std::size_t j = 0; j < n; ++j) base[j] = (sign[j] < 0 ? -1.0 : 1.0) * gain[j];

    const auto& w = weights[cls];
    for (std::size_t j = 0; j < n; ++j) {
      const auto nb = table.row(j);
      double v = 0.0;
      for (std::size_t k = 0; k < p; ++k) v += w(static_cast<Index>(j), static_cast<Index>(k)) * base[nb[k]];
      d.intensities(static_cast<Index>(i), static_cast<Index>(j)) = v + cfg.noise_sigma * normal(rng);
    }
  }

  // Marginal matching per (class, voxel). Exact sample standardization ties
  // every sample to the others of its class: under leave-one-run-out, the
  // training class mean of a voxel is minus the held-out contribution scaled by
  // the run fraction, which class-mean-driven linear models turn into
  // systematically wrong raw-feature predictions.
  for (std::size_t c = 0; c < c_count; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < m; ++i)
      if (static_cast<std::size_t>(d.labels[i]) == c) rows.push_back(i);
    if (rows.empty()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (auto i : rows) mean += d.intensities(static_cast<Index>(i), static_cast<Index>(j));
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (auto i : rows) {
        const double e = d.intensities(static_cast<Index>(i), static_cast<Index>(j)) - mean;
        var += e * e;
      }
      const double sd = std::sqrt(var / static_cast<double>(rows.size()));
      for (auto i : rows) {
        auto& v = d.intensities(static_cast<Index>(i), static_cast<Index>(j));
        v = sd > 0 ? (v - mean) / sd : v - mean;
      }
    }
  }
  validate(d);
  return d;
}

}  // namespace meshlearn

#endif  // MESHLEARN_SYNTHGEN_HPP
