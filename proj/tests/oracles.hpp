#ifndef MESHLEARN_TESTS_ORACLES_HPP
#define MESHLEARN_TESTS_ORACLES_HPP

// Brute-force reference implementations. They share no code with the library
// beyond plain data types, and favor obviousness over speed.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/SVD>

#include "meshlearn/dataset.hpp"

namespace oracle {

using meshlearn::Coord;
using meshlearn::Matrix;
using meshlearn::Vector;

/// Moore-Penrose solution a = X^+ c via a full Jacobi SVD.
inline Vector pinv_solve(const Matrix& x, const Vector& c) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = s.size() ? 1e-12 * std::max(x.rows(), x.cols()) * s(0) : 0.0;
  Eigen::MatrixXd s_plus = Eigen::MatrixXd::Zero(x.cols(), x.rows());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) s_plus(i, i) = 1.0 / s(i);
  return svd.matrixV() * s_plus * svd.matrixU().transpose() * c;
}

/// Neighbor indices of every voxel from a full sort of all pairwise distances.
inline std::vector<std::vector<std::size_t>> brute_neighbors(const std::vector<Coord>& coords, std::size_t p) {
  std::vector<std::vector<std::size_t>> out(coords.size());
  for (std::size_t j = 0; j < coords.size(); ++j) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t k = 0; k < coords.size(); ++k) {
      if (k == j) continue;
      const double dx = coords[j].x - coords[k].x, dy = coords[j].y - coords[k].y, dz = coords[j].z - coords[k].z;
      all.emplace_back(dx * dx + dy * dy + dz * dz, k);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t r = 0; r < p; ++r) out[j].push_back(all[r].second);
  }
  return out;
}

/// k-NN vote: distance ties to the smaller training index, vote ties to the
/// smaller label.
inline int knn_predict(const Matrix& train, const std::vector<int>& y, const Vector& query, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (Eigen::Index i = 0; i < train.rows(); ++i) d.emplace_back((train.row(i).transpose() - query).squaredNorm(), i);
  std::sort(d.begin(), d.end());
  std::map<int, int> votes;
  for (std::size_t r = 0; r < k; ++r) ++votes[y[d[r].second]];
  int best = votes.begin()->first, best_count = -1;
  for (const auto& [label, count] : votes)
    if (count > best_count) best = label, best_count = count;
  return best;
}

/// Gaussian naive Bayes prediction with unbiased variances floored at 1e-9.
inline std::vector<int> gnb_predict(const Matrix& train, const std::vector<int>& y, const Matrix& test) {
  std::map<int, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < y.size(); ++i) members[y[i]].push_back(static_cast<Eigen::Index>(i));
  std::vector<int> out;
  for (Eigen::Index q = 0; q < test.rows(); ++q) {
    double best = -INFINITY;
    int label = -1;
    for (const auto& [cls, rows] : members) {
      double score = std::log(static_cast<double>(rows.size()) / static_cast<double>(y.size()));
      for (Eigen::Index f = 0; f < train.cols(); ++f) {
        double mean = 0;
        for (auto r : rows) mean += train(r, f);
        mean /= static_cast<double>(rows.size());
        double var = 0;
        for (auto r : rows) var += (train(r, f) - mean) * (train(r, f) - mean);
        var = rows.size() > 1 ? var / static_cast<double>(rows.size() - 1) : 0.0;
        var = std::max(var, 1e-9);
        const double e = test(q, f) - mean;
        score += -0.5 * std::log(2 * M_PI * var) - e * e / (2 * var);
      }
      if (score > best) best = score, label = cls;
    }
    out.push_back(label);
  }
  return out;
}

/// Searchlight scores: for each voxel, GNB on the voxels at offsets {0,1}^3,
/// leave-one-run-out, hits pooled over all folds.
inline std::vector<double> searchlight_scores(const meshlearn::Dataset& d) {
  std::vector<double> scores;
  const auto runs = d.runs();
  for (std::size_t j = 0; j < d.n_voxels(); ++j) {
    std::vector<std::size_t> cols;
    for (std::size_t k = 0; k < d.n_voxels(); ++k) {
      const double dx = d.coords[k].x - d.coords[j].x, dy = d.coords[k].y - d.coords[j].y,
                   dz = d.coords[k].z - d.coords[j].z;
      if ((dx == 0 || dx == 1) && (dy == 0 || dy == 1) && (dz == 0 || dz == 1)) cols.push_back(k);
    }
    std::size_t hits = 0, total = 0;
    for (int r : runs) {
      std::vector<Eigen::Index> tr, te;
      for (std::size_t i = 0; i < d.n_samples(); ++i) (d.run_ids[i] == r ? te : tr).push_back(static_cast<Eigen::Index>(i));
      Matrix xtr(static_cast<Eigen::Index>(tr.size()), static_cast<Eigen::Index>(cols.size()));
      Matrix xte(static_cast<Eigen::Index>(te.size()), static_cast<Eigen::Index>(cols.size()));
      std::vector<int> ytr, yte;
      for (std::size_t a = 0; a < tr.size(); ++a) {
        for (std::size_t b = 0; b < cols.size(); ++b) xtr(a, b) = d.intensities(tr[a], cols[b]);
        ytr.push_back(d.labels[tr[a]]);
      }
      for (std::size_t a = 0; a < te.size(); ++a) {
        for (std::size_t b = 0; b < cols.size(); ++b) xte(a, b) = d.intensities(te[a], cols[b]);
        yte.push_back(d.labels[te[a]]);
      }
      const auto pred = gnb_predict(xtr, ytr, xte);
      for (std::size_t a = 0; a < pred.size(); ++a) hits += pred[a] == yte[a];
      total += te.size();
    }
    scores.push_back(static_cast<double>(hits) / static_cast<double>(total));
  }
  return scores;
}

/// Random dataset: distinct integer-lattice coordinates, Gaussian intensities.
inline meshlearn::Dataset random_dataset(std::uint64_t seed, std::size_t n_voxels, std::size_t n_runs,
                                         std::size_t per_run, std::size_t n_classes) {
  std::mt19937_64 rng(seed);
  meshlearn::Dataset d;
  std::set<std::tuple<int, int, int>> used;
  std::uniform_int_distribution<int> pos(-20, 20);
  while (d.coords.size() < n_voxels) {
    const std::tuple<int, int, int> t{pos(rng), pos(rng), pos(rng)};
    if (used.insert(t).second)
      d.coords.push_back({double(std::get<0>(t)), double(std::get<1>(t)), double(std::get<2>(t))});
  }
  const auto m = n_runs * per_run;
  d.intensities = Matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_voxels));
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < d.intensities.size(); ++i) d.intensities.data()[i] = normal(rng);
  for (std::size_t i = 0; i < m; ++i) {
    d.labels.push_back(static_cast<int>(i % n_classes));
    d.run_ids.push_back(static_cast<int>(i / per_run));
  }
  for (std::size_t c = 0; c < n_classes; ++c) d.class_names.push_back("c" + std::to_string(c));
  return d;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("meshlearn-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle

#endif  // MESHLEARN_TESTS_ORACLES_HPP
