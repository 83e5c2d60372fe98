#ifndef MESHLEARN_CLASSIFIERS_GNB_HPP
#define MESHLEARN_CLASSIFIERS_GNB_HPP

/*
 Naive Bayes with per-feature class-conditional densities.

   gaussian: one normal per (class, feature), unbiased variance
   kde:      Gaussian-kernel density over the class's training values per feature,
             bandwidth fixed or from Silverman's rule 1.06 * sd * n^(-1/5)

 Variances and bandwidths are floored at 1e-9 so constant features stay usable.
*/

#include <cmath>
#include <numbers>
#include <vector>

#include "meshlearn/classifiers/spec.hpp"

namespace meshlearn {

inline constexpr double kGnbFloor = 1e-9;

struct GnbModel {
  GnbParams params;
  Vector log_prior;  // C
  Matrix mean;       // C x F (gaussian)
  Matrix variance;   // C x F (gaussian)
  std::vector<Matrix> samples;  // per class, n_c x F (kde)
  Matrix bandwidth;             // C x F (kde)
};

namespace gnb {

inline double silverman_bandwidth(const Eigen::Ref<const Vector>& v) {
  const auto n = static_cast<double>(v.size());
  double sd = 0.0;
  if (v.size() > 1) sd = std::sqrt((v.array() - v.mean()).square().sum() / (n - 1.0));
  return std::max(1.06 * sd * std::pow(n, -0.2), kGnbFloor);
}

}  // namespace gnb

inline GnbModel train_gnb(const GnbParams& params, const Matrix& x, const std::vector<std::size_t>& y,
                          std::size_t n_classes) {
  if (params.bandwidth && !(*params.bandwidth > 0.0)) throw ArgumentError("kde bandwidth must be positive");
  const auto f = x.cols();
  const auto c = static_cast<Index>(n_classes);
  GnbModel m;
  m.params = params;
  m.log_prior.resize(c);

  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) members[y[i]].push_back(i);
  for (Index k = 0; k < c; ++k)
    m.log_prior(k) = std::log(static_cast<double>(members[static_cast<std::size_t>(k)].size()) /
                              static_cast<double>(y.size()));

  if (params.density == Density::Gaussian) {
    m.mean.setZero(c, f);
    m.variance.setZero(c, f);
    for (Index k = 0; k < c; ++k) {
      const Matrix xs = select_rows(x, members[static_cast<std::size_t>(k)]);
      const auto n = static_cast<double>(xs.rows());
      m.mean.row(k) = xs.colwise().mean();
      if (xs.rows() > 1)
        m.variance.row(k) = (xs.rowwise() - m.mean.row(k)).array().square().colwise().sum() / (n - 1.0);
      m.variance.row(k) = m.variance.row(k).cwiseMax(kGnbFloor);
    }
  } else {
    m.bandwidth.resize(c, f);
    for (Index k = 0; k < c; ++k) {
      m.samples.push_back(select_rows(x, members[static_cast<std::size_t>(k)]));
      const auto& xs = m.samples.back();
      for (Index j = 0; j < f; ++j)
        m.bandwidth(k, j) = params.bandwidth ? std::max(*params.bandwidth, kGnbFloor)
                                             : gnb::silverman_bandwidth(xs.col(j));
    }
  }
  return m;
}

/// Unnormalized log posterior, rows = queries, cols = classes.
inline Matrix gnb_log_joint(const GnbModel& m, const Matrix& x) {
  const auto c = m.log_prior.size();
  Matrix out(x.rows(), c);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  for (Index q = 0; q < x.rows(); ++q) {
    for (Index k = 0; k < c; ++k) {
      double s = m.log_prior(k);
      if (m.params.density == Density::Gaussian) {
        const auto var = m.variance.row(k).array();
        s += (-0.5 * (log_2pi + var.log()) - (x.row(q).array() - m.mean.row(k).array()).square() / (2.0 * var)).sum();
      } else {
        const auto& xs = m.samples[static_cast<std::size_t>(k)];
        const double log_n = std::log(static_cast<double>(xs.rows()));
        for (Index j = 0; j < x.cols(); ++j) {
          const double h = m.bandwidth(k, j);
          // log mean_i N(x; s_i, h^2), via log-sum-exp
          const Vector z = ((xs.col(j).array() - x(q, j)) / h).square() * -0.5;
          const double zmax = z.maxCoeff();
          s += zmax + std::log((z.array() - zmax).exp().sum()) - log_n - std::log(h) - 0.5 * log_2pi;
        }
      }
      out(q, k) = s;
    }
  }
  return out;
}

/// Class posteriors, rows sum to 1.
inline Matrix gnb_posteriors(const GnbModel& m, const Matrix& x) {
  Matrix lj = gnb_log_joint(m, x);
  for (Index q = 0; q < lj.rows(); ++q) {
    const double mx = lj.row(q).maxCoeff();
    lj.row(q) = (lj.row(q).array() - mx).exp();
    lj.row(q) /= lj.row(q).sum();
  }
  return lj;
}

inline std::vector<std::size_t> predict_gnb(const GnbModel& m, const Matrix& x) {
  const Matrix lj = gnb_log_joint(m, x);
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Index q = 0; q < x.rows(); ++q) out[static_cast<std::size_t>(q)] = detail::argmax_first(lj.row(q));
  return out;
}

}  // namespace meshlearn

#endif  // MESHLEARN_CLASSIFIERS_GNB_HPP
