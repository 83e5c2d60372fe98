#ifndef MESHLEARN_DATASET_HPP
#define MESHLEARN_DATASET_HPP

/*
 Voxel time-series datasets.

 A Dataset holds N voxel positions, an M x N intensity matrix (row i is the
 scan at time t_i), and per-sample class and run ids. On disk it is a bundle
 directory:

   manifest.json  {"n_voxels", "n_samples", "n_classes", "class_names", "n_runs"}
   coords.csv     voxel_id,x,y,z
   data.csv       M rows of N comma-separated values, no header
   labels.csv     sample_id,run_id,class_id

 Values are written with shortest round-trip formatting, so a write/load
 cycle reproduces the doubles exactly.
*/

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshlearn/core.hpp"

namespace meshlearn {

struct Coord {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

inline double squared_distance(const Coord& a, const Coord& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

struct Dataset {
  std::vector<Coord> coords;
  Matrix intensities;  // M x N
  std::vector<int> labels;
  std::vector<int> run_ids;
  std::vector<std::string> class_names;

  std::size_t n_voxels() const { return coords.size(); }
  std::size_t n_samples() const { return labels.size(); }
  std::size_t n_classes() const { return class_names.size(); }

  /// Distinct run ids, ascending.
  std::vector<int> runs() const {
    std::set<int> s(run_ids.begin(), run_ids.end());
    return {s.begin(), s.end()};
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.coords == b.coords && a.labels == b.labels && a.run_ids == b.run_ids &&
           a.class_names == b.class_names && a.intensities.rows() == b.intensities.rows() &&
           a.intensities.cols() == b.intensities.cols() && a.intensities == b.intensities;
  }
};

namespace detail {

inline void check_coords(const std::vector<Coord>& coords, const std::string& where) {
  std::vector<std::pair<Coord, std::size_t>> sorted;
  sorted.reserve(coords.size());
  for (std::size_t j = 0; j < coords.size(); ++j) {
    const auto& c = coords[j];
    if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(c.z))
      throw DataError(where + " row " + std::to_string(j) + ": non-finite coordinate");
    sorted.emplace_back(c, j);
  }
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < sorted.size(); ++k)
    if (sorted[k].first == sorted[k - 1].first)
      throw DataError(where + " row " + std::to_string(sorted[k].second) + ": duplicate of row " +
                      std::to_string(sorted[k - 1].second));
}

}  // namespace detail

/// Throws DataError on the first violated invariant.
inline void validate(const Dataset& d) {
  if (d.coords.empty()) throw DataError("dataset has no voxels");
  detail::check_coords(d.coords, "coords");
  const auto m = d.labels.size();
  if (m == 0) throw DataError("dataset has no samples");
  if (d.run_ids.size() != m) throw DataError("run_ids length differs from labels length");
  if (static_cast<std::size_t>(d.intensities.rows()) != m)
    throw DataError("intensity row count " + std::to_string(d.intensities.rows()) + " != sample count " +
                    std::to_string(m));
  if (static_cast<std::size_t>(d.intensities.cols()) != d.coords.size())
    throw DataError("intensity column count " + std::to_string(d.intensities.cols()) + " != voxel count " +
                    std::to_string(d.coords.size()));
  for (std::size_t i = 0; i < m; ++i) {
    if (d.labels[i] < 0 || static_cast<std::size_t>(d.labels[i]) >= d.class_names.size())
      throw DataError("sample " + std::to_string(i) + ": class id " + std::to_string(d.labels[i]) +
                      " outside [0, " + std::to_string(d.class_names.size()) + ")");
    if (!d.intensities.row(static_cast<Index>(i)).allFinite())
      throw DataError("sample " + std::to_string(i) + ": non-finite intensity");
  }
}

/// Rows `idx` of `d`, in the given order. Coordinates and class names are shared.
inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.coords = d.coords;
  out.class_names = d.class_names;
  out.intensities = select_rows(d.intensities, idx);
  out.labels = select(d.labels, idx);
  out.run_ids = select(d.run_ids, idx);
  return out;
}

// ---------------------------------------------------------------------------
// Label lag

/// Re-associates, within each run, the label of the run's i-th sample with the
/// intensity row at run position i + lag. Each run loses `lag` samples; sample
/// order is otherwise preserved.
inline Dataset shift_labels(const Dataset& d, std::size_t lag) {
  if (lag == 0) return d;
  std::map<int, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < d.n_samples(); ++i) positions[d.run_ids[i]].push_back(i);
  for (const auto& [run, pos] : positions)
    if (lag >= pos.size())
      throw ArgumentError("lag " + std::to_string(lag) + " >= length " + std::to_string(pos.size()) + " of run " +
                          std::to_string(run));

  // For every kept intensity row, the sample whose label it takes.
  std::vector<std::size_t> rows, label_source;
  std::map<int, std::size_t> seen;
  for (std::size_t i = 0; i < d.n_samples(); ++i) {
    const auto r = d.run_ids[i];
    const auto k = seen[r]++;
    if (k < lag) continue;
    rows.push_back(i);
    label_source.push_back(positions[r][k - lag]);
  }
  Dataset out = subset(d, rows);
  out.labels = select(d.labels, label_source);
  return out;
}

// ---------------------------------------------------------------------------
// Run splits

struct RunSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline RunSplit split_indices_by_run(const std::vector<int>& run_ids, int held_out_run) {
  RunSplit s;
  for (std::size_t i = 0; i < run_ids.size(); ++i) (run_ids[i] == held_out_run ? s.test : s.train).push_back(i);
  if (s.test.empty()) throw ArgumentError("run " + std::to_string(held_out_run) + " not present in dataset");
  return s;
}

/// Leave-one-run-out folds in ascending run order. A single run falls back to
/// `fallback_k` interleaved sample folds (sample i goes to fold i mod k).
inline std::vector<RunSplit> inner_folds(const std::vector<int>& run_ids, std::size_t fallback_k = 5) {
  std::set<int> runs(run_ids.begin(), run_ids.end());
  std::vector<RunSplit> folds;
  if (runs.size() >= 2) {
    for (int r : runs) folds.push_back(split_indices_by_run(run_ids, r));
    return folds;
  }
  const auto k = std::min(fallback_k, run_ids.size());
  for (std::size_t f = 0; f < k; ++f) {
    RunSplit s;
    for (std::size_t i = 0; i < run_ids.size(); ++i) (i % k == f ? s.test : s.train).push_back(i);
    folds.push_back(std::move(s));
  }
  return folds;
}

inline std::pair<Dataset, Dataset> split_by_run(const Dataset& d, int held_out_run) {
  auto s = split_indices_by_run(d.run_ids, held_out_run);
  return {subset(d, s.train), subset(d, s.test)};
}

// ---------------------------------------------------------------------------
// Bundle I/O

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const std::string& where) {
  T value{};
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw DataError(where + ": cannot parse '" + std::string(field) + "'");
  return value;
}

/// Non-empty lines of a text file, CR stripped.
inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(p.filename().string() + ": cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void expect_header(const std::vector<std::string>& lines, std::string_view header, const std::string& file) {
  if (lines.empty() || trim(lines.front()) != header)
    throw DataError(file + ": expected header '" + std::string(header) + "'");
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& dir) {
  using detail::parse_number;
  const auto manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw DataError("manifest.json: cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest.json: ") + e.what());
  }

  std::size_t n_voxels = 0, n_samples = 0, n_classes = 0, n_runs = 0;
  Dataset d;
  try {
    n_voxels = manifest.at("n_voxels").get<std::size_t>();
    n_samples = manifest.at("n_samples").get<std::size_t>();
    n_classes = manifest.at("n_classes").get<std::size_t>();
    n_runs = manifest.at("n_runs").get<std::size_t>();
    d.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest.json: ") + e.what());
  }
  if (d.class_names.size() != n_classes)
    throw DataError("manifest.json: class_names has " + std::to_string(d.class_names.size()) + " entries, n_classes is " +
                    std::to_string(n_classes));

  // coords.csv
  {
    const std::string file = "coords.csv";
    auto lines = detail::read_lines(dir / file);
    detail::expect_header(lines, "voxel_id,x,y,z", file);
    if (lines.size() - 1 != n_voxels)
      throw DataError(file + ": " + std::to_string(lines.size() - 1) + " rows, manifest says n_voxels=" +
                      std::to_string(n_voxels));
    d.coords.resize(n_voxels);
    for (std::size_t r = 0; r < n_voxels; ++r) {
      const std::string where = file + " row " + std::to_string(r);
      auto f = detail::split_csv(lines[r + 1]);
      if (f.size() != 4) throw DataError(where + ": expected 4 fields, got " + std::to_string(f.size()));
      if (parse_number<long long>(f[0], where) != static_cast<long long>(r))
        throw DataError(where + ": voxel_id must be " + std::to_string(r));
      d.coords[r] = {parse_number<double>(f[1], where), parse_number<double>(f[2], where),
                     parse_number<double>(f[3], where)};
    }
    detail::check_coords(d.coords, file);
  }

  // data.csv
  {
    const std::string file = "data.csv";
    auto lines = detail::read_lines(dir / file);
    if (lines.size() != n_samples)
      throw DataError(file + ": " + std::to_string(lines.size()) + " rows, manifest says n_samples=" +
                      std::to_string(n_samples));
    d.intensities.resize(static_cast<Index>(n_samples), static_cast<Index>(n_voxels));
    for (std::size_t r = 0; r < n_samples; ++r) {
      const std::string where = file + " row " + std::to_string(r);
      auto f = detail::split_csv(lines[r]);
      if (f.size() != n_voxels)
        throw DataError(where + ": expected " + std::to_string(n_voxels) + " values, got " + std::to_string(f.size()));
      for (std::size_t c = 0; c < n_voxels; ++c) {
        const double v = parse_number<double>(f[c], where);
        if (!std::isfinite(v)) throw DataError(where + ": non-finite value in column " + std::to_string(c));
        d.intensities(static_cast<Index>(r), static_cast<Index>(c)) = v;
      }
    }
  }

  // labels.csv
  {
    const std::string file = "labels.csv";
    auto lines = detail::read_lines(dir / file);
    detail::expect_header(lines, "sample_id,run_id,class_id", file);
    if (lines.size() - 1 != n_samples)
      throw DataError(file + ": " + std::to_string(lines.size() - 1) + " rows, manifest says n_samples=" +
                      std::to_string(n_samples));
    d.labels.resize(n_samples);
    d.run_ids.resize(n_samples);
    for (std::size_t r = 0; r < n_samples; ++r) {
      const std::string where = file + " row " + std::to_string(r);
      auto f = detail::split_csv(lines[r + 1]);
      if (f.size() != 3) throw DataError(where + ": expected 3 fields, got " + std::to_string(f.size()));
      if (parse_number<long long>(f[0], where) != static_cast<long long>(r))
        throw DataError(where + ": sample_id must be " + std::to_string(r));
      d.run_ids[r] = parse_number<int>(f[1], where);
      d.labels[r] = parse_number<int>(f[2], where);
      if (d.labels[r] < 0 || static_cast<std::size_t>(d.labels[r]) >= n_classes)
        throw DataError(where + ": class_id " + std::to_string(d.labels[r]) + " outside [0, " +
                        std::to_string(n_classes) + ")");
    }
  }

  if (d.runs().size() != n_runs)
    throw DataError("labels.csv: " + std::to_string(d.runs().size()) + " distinct runs, manifest says n_runs=" +
                    std::to_string(n_runs));
  validate(d);
  return d;
}

/// Writes `d` as a bundle into `dir` (created if missing). `extra_manifest`
/// keys are merged into manifest.json.
inline void write_dataset(const Dataset& d, const std::filesystem::path& dir,
                          const nlohmann::json& extra_manifest = nlohmann::json::object()) {
  validate(d);
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = extra_manifest;
  manifest["n_voxels"] = d.n_voxels();
  manifest["n_samples"] = d.n_samples();
  manifest["n_classes"] = d.n_classes();
  manifest["class_names"] = d.class_names;
  manifest["n_runs"] = d.runs().size();
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "coords.csv", std::ios::binary);
    out << "voxel_id,x,y,z\n";
    for (std::size_t j = 0; j < d.coords.size(); ++j) {
      const auto& c = d.coords[j];
      out << j << ',' << detail::format_double(c.x) << ',' << detail::format_double(c.y) << ','
          << detail::format_double(c.z) << '\n';
    }
  }
  {
    std::ofstream out(dir / "data.csv", std::ios::binary);
    std::string line;
    for (Index i = 0; i < d.intensities.rows(); ++i) {
      line.clear();
      for (Index j = 0; j < d.intensities.cols(); ++j) {
        if (j) line += ',';
        line += detail::format_double(d.intensities(i, j));
      }
      line += '\n';
      out << line;
    }
  }
  {
    std::ofstream out(dir / "labels.csv", std::ios::binary);
    out << "sample_id,run_id,class_id\n";
    for (std::size_t i = 0; i < d.n_samples(); ++i) out << i << ',' << d.run_ids[i] << ',' << d.labels[i] << '\n';
  }
  if (!std::filesystem::exists(dir / "labels.csv")) throw DataError("failed to write bundle to " + dir.string());
}

}  // namespace meshlearn

#endif  // MESHLEARN_DATASET_HPP
