#ifndef MESHLEARN_PCA_HPP
#define MESHLEARN_PCA_HPP

#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "meshlearn/core.hpp"

namespace meshlearn {

/// Principal axes of a training matrix, by descending explained variance.
/// Each component's largest-magnitude entry is positive.
struct PcaModel {
  Vector mean;               // F
  Matrix components;         // K x F, orthonormal rows
  Vector explained_variance; // K
};

namespace pca {

inline Eigen::BDCSVD<Eigen::MatrixXd> centered_svd(const Matrix& x, const Vector& mean) {
  Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  return Eigen::BDCSVD<Eigen::MatrixXd>(centered, Eigen::ComputeThinV);
}

/// Number of components with non-negligible variance (numerical rank of the
/// centered data), at least 1.
inline std::size_t numerical_rank(const Vector& singular_values, Index rows, Index cols) {
  if (singular_values.size() == 0) return 1;
  const double tol = static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() *
                     singular_values(0);
  std::size_t r = 0;
  for (Index i = 0; i < singular_values.size(); ++i)
    if (singular_values(i) > tol) ++r;
  return std::max<std::size_t>(r, 1);
}

}  // namespace pca

inline PcaModel pca_fit(const Matrix& x, std::size_t k) {
  const auto limit = static_cast<std::size_t>(std::min(x.rows(), x.cols()));
  if (k < 1 || k > limit)
    throw ArgumentError("pca k=" + std::to_string(k) + " outside [1, " + std::to_string(limit) + "]");
  if (!x.allFinite()) throw DataError("non-finite value in pca input");

  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const auto svd = pca::centered_svd(x, m.mean);
  const double dof = std::max<double>(static_cast<double>(x.rows()) - 1.0, 1.0);
  const auto kk = static_cast<Index>(k);
  m.components.resize(kk, x.cols());
  m.explained_variance.resize(kk);
  const auto& v = svd.matrixV();
  const auto& s = svd.singularValues();
  for (Index c = 0; c < kk; ++c) {
    Vector axis = c < v.cols() ? Vector(v.col(c)) : Vector::Zero(x.cols());
    Index arg = 0;
    for (Index i = 1; i < axis.size(); ++i)
      if (std::abs(axis(i)) > std::abs(axis(arg))) arg = i;
    if (axis(arg) < 0) axis = -axis;
    m.components.row(c) = axis.transpose();
    m.explained_variance(c) = c < s.size() ? s(c) * s(c) / dof : 0.0;
  }
  return m;
}

/// Fits with k = numerical rank of the centered training data.
inline PcaModel pca_fit_auto(const Matrix& x) {
  Vector mean = x.colwise().mean().transpose();
  const auto svd = pca::centered_svd(x, mean);
  const auto rank = pca::numerical_rank(svd.singularValues(), x.rows(), x.cols());
  return pca_fit(x, std::min<std::size_t>(rank, static_cast<std::size_t>(std::min(x.rows(), x.cols()))));
}

inline Matrix pca_transform(const PcaModel& m, const Matrix& x) {
  if (x.cols() != m.mean.size())
    throw ArgumentError("pca model expects " + std::to_string(m.mean.size()) + " features, got " +
                        std::to_string(x.cols()));
  return (x.rowwise() - m.mean.transpose()) * m.components.transpose();
}

}  // namespace meshlearn

#endif  // MESHLEARN_PCA_HPP
