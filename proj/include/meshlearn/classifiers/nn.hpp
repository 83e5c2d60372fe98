#ifndef MESHLEARN_CLASSIFIERS_NN_HPP
#define MESHLEARN_CLASSIFIERS_NN_HPP

/*
 Feed-forward network trained by full-batch backpropagation.

 hidden_units > 0:  x -> sigmoid(W1 x + b1) -> softmax(W2 h + b2)
 hidden_units = 0:  x -> softmax(W x + b)

 Loss is mean cross-entropy. Parameters live in one flat vector, layer by layer:
 W1 (H x F, row-major), b1 (H), W2 (C x H, row-major), b2 (C).
*/

#include <cmath>
#include <random>
#include <vector>

#include "meshlearn/classifiers/spec.hpp"

namespace meshlearn {

struct NnShape {
  std::size_t inputs = 0, hidden = 0, outputs = 0;

  std::size_t size() const {
    return hidden == 0 ? outputs * (inputs + 1) : hidden * (inputs + 1) + outputs * (hidden + 1);
  }
};

struct NnModel {
  NnParams params;
  NnShape shape;
  Vector weights;
};

namespace nn {

struct Layers {
  Eigen::Map<const Matrix> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Matrix> w2;
  Eigen::Map<const Vector> b2;
};

inline Layers unpack(const NnShape& s, const Vector& theta) {
  const auto f = static_cast<Index>(s.inputs), h = static_cast<Index>(s.hidden), c = static_cast<Index>(s.outputs);
  const double* p = theta.data();
  if (h == 0) return {{nullptr, 0, 0}, {nullptr, 0}, {p, c, f}, {p + c * f, c}};
  return {{p, h, f}, {p + h * f, h}, {p + h * f + h, c, h}, {p + h * f + h + c * h, c}};
}

inline Matrix softmax_rows(Matrix z) {
  for (Index r = 0; r < z.rows(); ++r) {
    z.row(r).array() -= z.row(r).maxCoeff();
    z.row(r) = z.row(r).array().exp();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

/// Class probabilities (rows = samples).
inline Matrix forward(const NnShape& s, const Vector& theta, const Matrix& x) {
  const auto L = unpack(s, theta);
  Matrix in = x;
  if (s.hidden > 0) {
    Matrix a = (x * L.w1.transpose()).rowwise() + L.b1.transpose();
    in = (1.0 / (1.0 + (-a.array()).exp())).matrix();
  }
  return softmax_rows((in * L.w2.transpose()).rowwise() + L.b2.transpose());
}

/// Mean cross-entropy and its gradient with respect to the flat parameter vector.
inline double loss_and_gradient(const NnShape& s, const Vector& theta, const Matrix& x,
                                const std::vector<std::size_t>& y, Vector* grad) {
  const auto L = unpack(s, theta);
  const auto m = static_cast<double>(x.rows());
  Matrix hidden;
  const Matrix* in = &x;
  if (s.hidden > 0) {
    Matrix a = (x * L.w1.transpose()).rowwise() + L.b1.transpose();
    hidden = (1.0 / (1.0 + (-a.array()).exp())).matrix();
    in = &hidden;
  }
  Matrix prob = softmax_rows((*in * L.w2.transpose()).rowwise() + L.b2.transpose());
  double loss = 0.0;
  for (Index i = 0; i < x.rows(); ++i) loss -= std::log(std::max(prob(i, static_cast<Index>(y[static_cast<std::size_t>(i)])), 1e-300));
  loss /= m;
  if (!grad) return loss;

  // dL/dz for the output layer: (p - onehot) / m
  Matrix delta = prob;
  for (Index i = 0; i < x.rows(); ++i) delta(i, static_cast<Index>(y[static_cast<std::size_t>(i)])) -= 1.0;
  delta /= m;

  grad->resize(theta.size());
  const auto f = static_cast<Index>(s.inputs), h = static_cast<Index>(s.hidden), c = static_cast<Index>(s.outputs);
  double* g = grad->data();
  if (h == 0) {
    Eigen::Map<Matrix>(g, c, f) = delta.transpose() * x;
    Eigen::Map<Vector>(g + c * f, c) = delta.colwise().sum().transpose();
    return loss;
  }
  Eigen::Map<Matrix>(g + h * f + h, c, h) = delta.transpose() * hidden;
  Eigen::Map<Vector>(g + h * f + h + c * h, c) = delta.colwise().sum().transpose();
  Matrix dh = (delta * L.w2).array() * hidden.array() * (1.0 - hidden.array());
  Eigen::Map<Matrix>(g, h, f) = dh.transpose() * x;
  Eigen::Map<Vector>(g + h * f, h) = dh.colwise().sum().transpose();
  return loss;
}

}  // namespace nn

inline NnModel train_nn(const NnParams& params, const Matrix& x, const std::vector<std::size_t>& y,
                        std::size_t n_classes) {
  if (!(params.learning_rate > 0.0)) throw ArgumentError("nn.learning_rate must be positive");
  if (params.epochs < 1) throw ArgumentError("nn.epochs must be >= 1");
  NnModel m;
  m.params = params;
  m.shape = {static_cast<std::size_t>(x.cols()), params.hidden_units, n_classes};
  m.weights.resize(static_cast<Index>(m.shape.size()));
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> init(-0.1, 0.1);
  for (Index i = 0; i < m.weights.size(); ++i) m.weights(i) = init(rng);

  Vector grad;
  for (std::size_t e = 0; e < params.epochs; ++e) {
    nn::loss_and_gradient(m.shape, m.weights, x, y, &grad);
    m.weights -= params.learning_rate * grad;
  }
  if (!m.weights.allFinite()) throw DataError("nn training diverged (non-finite weights)");
  return m;
}

inline std::vector<std::size_t> predict_nn(const NnModel& m, const Matrix& x) {
  const Matrix prob = nn::forward(m.shape, m.weights, x);
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Index q = 0; q < x.rows(); ++q) out[static_cast<std::size_t>(q)] = detail::argmax_first(prob.row(q));
  return out;
}

}  // namespace meshlearn

#endif  // MESHLEARN_CLASSIFIERS_NN_HPP
