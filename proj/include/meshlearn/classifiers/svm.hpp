#ifndef MESHLEARN_CLASSIFIERS_SVM_HPP
#define MESHLEARN_CLASSIFIERS_SVM_HPP

/*
 Soft-margin SVM trained by sequential minimal optimization.

 The dual

     min 0.5 a'Qa - e'a,  Q_ij = y_i y_j K(x_i, x_j),  0 <= a_i <= C,  y'a = 0

 is solved two multipliers at a time. The working pair is the maximal
 violating i plus the j with the largest second-order decrease; iteration
 stops once the violation gap m(a) - M(a) drops below the tolerance, which
 bounds every KKT residual by the same tolerance.

 Multiclass: one-vs-one over sorted class pairs, majority vote, ties to the
 smallest class.
*/

#include <cmath>
#include <limits>
#include <vector>

#include "meshlearn/classifiers/spec.hpp"

namespace meshlearn {

struct BinarySvm {
  std::vector<double> alpha;  // one per training sample of the pair problem
  double rho = 0.0;           // decision(x) = sum_i alpha_i y_i K(x_i, x) - rho
  std::size_t iterations = 0;
  bool converged = true;
};

namespace svm {

/// Solves the binary dual on a precomputed kernel matrix. `y` holds +1 / -1.
inline BinarySvm solve_smo(const Matrix& kernel, const std::vector<int>& y, double cost, double tolerance,
                           std::size_t max_iterations) {
  const auto n = y.size();
  constexpr double kTau = 1e-12;
  BinarySvm out;
  out.alpha.assign(n, 0.0);
  auto& a = out.alpha;
  std::vector<double> grad(n, -1.0);  // grad of the dual objective, Qa - e

  auto q = [&](std::size_t i, std::size_t j) {
    return static_cast<double>(y[i] * y[j]) * kernel(static_cast<Index>(i), static_cast<Index>(j));
  };
  auto kdiag = [&](std::size_t i) { return kernel(static_cast<Index>(i), static_cast<Index>(i)); };
  auto in_up = [&](std::size_t t) { return y[t] == 1 ? a[t] < cost : a[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] == 1 ? a[t] > 0.0 : a[t] < cost; };

  for (;;) {
    // i: maximal -y_t grad_t over I_up
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (in_up(t) && -y[t] * grad[t] >= gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    // j: largest second-order objective decrease over I_low
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double yg = y[t] * grad[t];
      gmax2 = std::max(gmax2, yg);
      if (i == n) continue;
      const double diff = gmax + yg;
      if (diff > 0) {
        double quad = kdiag(i) + kdiag(t) - 2.0 * kernel(static_cast<Index>(i), static_cast<Index>(t));
        if (quad <= 0) quad = kTau;
        const double obj = -(diff * diff) / quad;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (i == n || j == n || gmax + gmax2 < tolerance) break;
    if (out.iterations >= max_iterations) {
      out.converged = false;
      break;
    }
    ++out.iterations;

    const double ai_old = a[i], aj_old = a[j];
    if (y[i] != y[j]) {
      double quad = kdiag(i) + kdiag(j) + 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) { a[j] = 0; a[i] = diff; }
      } else {
        if (a[i] < 0) { a[i] = 0; a[j] = -diff; }
      }
      if (diff > 0) {
        if (a[i] > cost) { a[i] = cost; a[j] = cost - diff; }
      } else {
        if (a[j] > cost) { a[j] = cost; a[i] = cost + diff; }
      }
    } else {
      double quad = kdiag(i) + kdiag(j) - 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > cost) {
        if (a[i] > cost) { a[i] = cost; a[j] = sum - cost; }
      } else {
        if (a[j] < 0) { a[j] = 0; a[i] = sum; }
      }
      if (sum > cost) {
        if (a[j] > cost) { a[j] = cost; a[i] = sum - cost; }
      } else {
        if (a[i] < 0) { a[i] = 0; a[j] = sum; }
      }
    }
    const double di = a[i] - ai_old, dj = a[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }

  // rho: mean of y_t grad_t over free multipliers, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (a[t] >= cost) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  out.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  return out;
}

/// Kernel values between rows of `a` and rows of `b`.
inline Matrix kernel_matrix(const Matrix& a, const Matrix& b, const SvmParams& p) {
  if (p.kernel == Kernel::Linear) return a * b.transpose();
  Matrix k(a.rows(), b.rows());
  const double g = 1.0 / (2.0 * p.sigma * p.sigma);
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < b.rows(); ++c) k(r, c) = std::exp(-g * (a.row(r) - b.row(c)).squaredNorm());
  return k;
}

/// Kernel from precomputed squared distances (rbf) or inner products (linear).
inline Matrix kernel_from(const Matrix& sq_dist_or_dot, const SvmParams& p) {
  if (p.kernel == Kernel::Linear) return sq_dist_or_dot;
  const double g = 1.0 / (2.0 * p.sigma * p.sigma);
  return (sq_dist_or_dot.array() * -g).exp().matrix();
}

}  // namespace svm

struct SvmModel {
  SvmParams params;
  Matrix x;                    // training samples
  std::vector<std::size_t> y;  // encoded classes
  std::size_t n_classes = 0;
  struct Pair {
    std::size_t first, second;       // encoded classes; positive side is `first`
    std::vector<std::size_t> index;  // training rows used by this pair
    BinarySvm machine;
  };
  std::vector<Pair> pairs;
};

/// One-vs-one training on a precomputed training kernel (rows/cols = training samples).
inline SvmModel train_svm_with_kernel(const SvmParams& params, const Matrix& x, const std::vector<std::size_t>& y,
                                      std::size_t n_classes, const Matrix& kernel) {
  if (!(params.cost > 0.0)) throw ArgumentError("svm cost must be positive");
  if (params.kernel == Kernel::Rbf && !(params.sigma > 0.0)) throw ArgumentError("rbf sigma must be positive");
  SvmModel m;
  m.params = params;
  m.x = x;
  m.y = y;
  m.n_classes = n_classes;
  for (std::size_t a = 0; a < n_classes; ++a)
    for (std::size_t b = a + 1; b < n_classes; ++b) {
      SvmModel::Pair pr{a, b, {}, {}};
      std::vector<int> sign;
      for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == a || y[i] == b) {
          pr.index.push_back(i);
          sign.push_back(y[i] == a ? 1 : -1);
        }
      if (pr.index.empty()) continue;
      Matrix sub(static_cast<Index>(pr.index.size()), static_cast<Index>(pr.index.size()));
      for (std::size_t r = 0; r < pr.index.size(); ++r)
        for (std::size_t c = 0; c < pr.index.size(); ++c)
          sub(static_cast<Index>(r), static_cast<Index>(c)) =
              kernel(static_cast<Index>(pr.index[r]), static_cast<Index>(pr.index[c]));
      pr.machine = svm::solve_smo(sub, sign, params.cost, params.tolerance, params.max_iterations);
      m.pairs.push_back(std::move(pr));
    }
  return m;
}

inline SvmModel train_svm(const SvmParams& params, const Matrix& x, const std::vector<std::size_t>& y,
                          std::size_t n_classes) {
  return train_svm_with_kernel(params, x, y, n_classes, svm::kernel_matrix(x, x, params));
}

/// Votes given kernel values between queries (rows) and training samples (cols).
inline std::vector<std::size_t> predict_svm_with_kernel(const SvmModel& m, const Matrix& query_kernel) {
  std::vector<std::size_t> out(static_cast<std::size_t>(query_kernel.rows()));
  std::vector<std::size_t> votes(m.n_classes);
  for (Index q = 0; q < query_kernel.rows(); ++q) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& pr : m.pairs) {
      double f = -pr.machine.rho;
      for (std::size_t r = 0; r < pr.index.size(); ++r) {
        const double al = pr.machine.alpha[r];
        if (al == 0.0) continue;
        const double yr = m.y[pr.index[r]] == pr.first ? 1.0 : -1.0;
        f += al * yr * query_kernel(q, static_cast<Index>(pr.index[r]));
      }
      ++votes[f > 0 ? pr.first : pr.second];
    }
    out[static_cast<std::size_t>(q)] =
        static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

inline std::vector<std::size_t> predict_svm(const SvmModel& m, const Matrix& x) {
  return predict_svm_with_kernel(m, svm::kernel_matrix(x, m.x, m.params));
}

}  // namespace meshlearn

#endif  // MESHLEARN_CLASSIFIERS_SVM_HPP
