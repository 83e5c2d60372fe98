#ifndef MESHLEARN_CLASSIFIERS_KNN_HPP
#define MESHLEARN_CLASSIFIERS_KNN_HPP

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "meshlearn/classifiers/spec.hpp"

namespace meshlearn {

struct KnnModel {
  KnnParams params;
  Matrix x;
  std::vector<std::size_t> y;  // encoded class positions
};

namespace knn {

/// Training indices ordered by (squared distance, index), truncated to `k`.
inline std::vector<std::size_t> ranked_by_distance(std::span<const double> sq_dist, std::size_t k) {
  std::vector<std::size_t> idx(sq_dist.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sq_dist[a] < sq_dist[b] || (sq_dist[a] == sq_dist[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

/// Majority vote over the first k ranked neighbors; ties go to the smallest class.
inline std::size_t vote(std::span<const std::size_t> ranked, const std::vector<std::size_t>& y, std::size_t k,
                        std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::size_t r = 0; r < k && r < ranked.size(); ++r) ++counts[y[ranked[r]]];
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

/// Squared Euclidean distances from each query row to each reference row.
inline Matrix squared_distances(const Matrix& queries, const Matrix& refs) {
  Matrix d(queries.rows(), refs.rows());
  for (Index q = 0; q < queries.rows(); ++q)
    for (Index r = 0; r < refs.rows(); ++r) d(q, r) = (queries.row(q) - refs.row(r)).squaredNorm();
  return d;
}

}  // namespace knn

inline KnnModel train_knn(const KnnParams& params, const Matrix& x, std::vector<std::size_t> y) {
  if (params.k < 1) throw ArgumentError("knn.k must be >= 1");
  if (params.k > static_cast<std::size_t>(x.rows()))
    throw ArgumentError("knn.k=" + std::to_string(params.k) + " exceeds training size " + std::to_string(x.rows()));
  return {params, x, std::move(y)};
}

inline std::vector<std::size_t> predict_knn(const KnnModel& m, const Matrix& x, std::size_t n_classes) {
  const Matrix d = knn::squared_distances(x, m.x);
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Index q = 0; q < x.rows(); ++q) {
    const auto ranked = knn::ranked_by_distance({d.row(q).data(), static_cast<std::size_t>(d.cols())}, m.params.k);
    out[static_cast<std::size_t>(q)] = knn::vote(ranked, m.y, m.params.k, n_classes);
  }
  return out;
}

}  // namespace meshlearn

#endif  // MESHLEARN_CLASSIFIERS_KNN_HPP
