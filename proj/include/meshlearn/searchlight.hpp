#ifndef MESHLEARN_SEARCHLIGHT_HPP
#define MESHLEARN_SEARCHLIGHT_HPP

/*
 Searchlight voxel selection.

 Every voxel is scored by the cross-validated accuracy of a Gaussian naive
 Bayes classifier that sees only the voxels of its local block (integer grid
 offsets from the voxel's position, clipped to voxels that exist). Voxels
 scoring at or above a threshold are kept.

 The default block is the 2 x 2 x 2 corner block {0,1}^3.
*/

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <vector>

#include "meshlearn/classifiers/gnb.hpp"
#include "meshlearn/dataset.hpp"

namespace meshlearn {

using GridOffset = std::array<int, 3>;

inline std::vector<GridOffset> corner_block() {
  std::vector<GridOffset> b;
  for (int dx = 0; dx <= 1; ++dx)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dz = 0; dz <= 1; ++dz) b.push_back({dx, dy, dz});
  return b;
}

struct SearchlightConfig {
  std::vector<GridOffset> block = corner_block();
  std::optional<double> threshold;  // empty = choose by inner cross-validation
  double grid_spacing = 1.0;        // coordinates are divided by this before snapping

  void validate() const {
    if (block.empty()) throw ArgumentError("searchlight block is empty");
    if (std::find(block.begin(), block.end(), GridOffset{0, 0, 0}) == block.end())
      throw ArgumentError("searchlight block must contain offset (0,0,0)");
    if (!(grid_spacing > 0.0)) throw ArgumentError("searchlight grid spacing must be positive");
    if (threshold && (*threshold < 0.0 || !std::isfinite(*threshold)))
      throw ArgumentError("searchlight threshold must be a finite value >= 0");
  }
};

/// Candidate thresholds for automatic selection: 0.10, 0.15, ..., 0.50.
inline std::vector<double> searchlight_threshold_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 8; ++i) g.push_back(0.10 + 0.05 * i);
  return g;
}

/// Voxel indices inside each voxel's block.
inline std::vector<std::vector<std::size_t>> searchlight_blocks(const std::vector<Coord>& coords,
                                                                const SearchlightConfig& cfg) {
  cfg.validate();
  std::map<GridOffset, std::size_t> at;
  std::vector<GridOffset> pos(coords.size());
  for (std::size_t j = 0; j < coords.size(); ++j) {
    const double v[3] = {coords[j].x / cfg.grid_spacing, coords[j].y / cfg.grid_spacing,
                         coords[j].z / cfg.grid_spacing};
    for (int a = 0; a < 3; ++a) {
      const double r = std::round(v[a]);
      if (std::abs(v[a] - r) > 1e-6)
        throw DataError("voxel " + std::to_string(j) + " is not on the searchlight grid (spacing " +
                        detail::format_double(cfg.grid_spacing) + ")");
      pos[j][static_cast<std::size_t>(a)] = static_cast<int>(r);
    }
    at[pos[j]] = j;
  }
  std::vector<std::vector<std::size_t>> blocks(coords.size());
  for (std::size_t j = 0; j < coords.size(); ++j)
    for (const auto& o : cfg.block) {
      auto it = at.find({pos[j][0] + o[0], pos[j][1] + o[1], pos[j][2] + o[2]});
      if (it != at.end()) blocks[j].push_back(it->second);
    }
  return blocks;
}

/// Cross-validated GNB accuracy per voxel (pooled over `folds`), computed from
/// `train` alone. `folds` index rows of `train`.
inline std::vector<double> searchlight_scores(const Dataset& train, const SearchlightConfig& cfg,
                                              const std::vector<RunSplit>& folds) {
  const auto blocks = searchlight_blocks(train.coords, cfg);
  std::vector<double> scores(train.n_voxels(), 0.0);

  struct FoldData {
    std::vector<std::size_t> train_y;
    std::vector<int> test_labels;
    std::vector<int> classes;
    bool usable = false;
  };
  std::vector<FoldData> prepared;
  std::size_t evaluated = 0;
  for (const auto& f : folds) {
    FoldData fd;
    const auto ytr = select(train.labels, f.train);
    if (!ytr.empty()) {
      detail::ClassIndex ci(ytr);
      fd.usable = ci.classes.size() >= 2 && !f.test.empty();
      fd.train_y = ci.encoded;
      fd.classes = ci.classes;
    }
    fd.test_labels = select(train.labels, f.test);
    if (fd.usable) evaluated += f.test.size();
    prepared.push_back(std::move(fd));
  }
  if (evaluated == 0) throw ArgumentError("searchlight scoring needs folds with at least 2 training classes");

  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Matrix local = select_cols(train.intensities, blocks[j]);
    std::size_t correct = 0;
    for (std::size_t fi = 0; fi < folds.size(); ++fi) {
      const auto& fd = prepared[fi];
      if (!fd.usable) continue;
      const auto model = train_gnb(GnbParams{}, select_rows(local, folds[fi].train), fd.train_y, fd.classes.size());
      const auto pred = predict_gnb(model, select_rows(local, folds[fi].test));
      for (std::size_t q = 0; q < pred.size(); ++q)
        if (fd.classes[pred[q]] == fd.test_labels[q]) ++correct;
    }
    scores[j] = static_cast<double>(correct) / static_cast<double>(evaluated);
  }
  return scores;
}

/// Voxels with score >= threshold, ascending. Empty result signals that the
/// caller must fall back (see searchlight_top1).
inline std::vector<std::size_t> searchlight_select(const std::vector<double>& scores, double threshold) {
  std::vector<std::size_t> mask;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (scores[j] >= threshold) mask.push_back(j);
  return mask;
}

/// Best-scoring voxel, smallest index on ties.
inline std::size_t searchlight_top1(const std::vector<double>& scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

inline void write_scores_csv(const std::vector<double>& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "voxel_id,score\n";
  for (std::size_t j = 0; j < scores.size(); ++j) out << j << ',' << detail::format_double(scores[j]) << '\n';
}

inline void write_mask_csv(const std::vector<std::size_t>& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "voxel_id\n";
  for (auto j : mask) out << j << '\n';
}

}  // namespace meshlearn

#endif  // MESHLEARN_SEARCHLIGHT_HPP
