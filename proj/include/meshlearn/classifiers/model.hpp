#ifndef MESHLEARN_CLASSIFIERS_MODEL_HPP
#define MESHLEARN_CLASSIFIERS_MODEL_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <variant>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

#include "meshlearn/classifiers/gnb.hpp"
#include "meshlearn/classifiers/knn.hpp"
#include "meshlearn/classifiers/nn.hpp"
#include "meshlearn/classifiers/spec.hpp"
#include "meshlearn/classifiers/svm.hpp"

namespace meshlearn {

/// A trained classifier. Predictions are always drawn from `classes`.
struct Model {
  ClassifierSpec spec;
  std::vector<int> classes;  // ascending
  std::variant<KnnModel, GnbModel, SvmModel, NnModel> state;

  std::size_t n_features() const {
    return std::visit(
        [](const auto& s) -> std::size_t {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, NnModel>) return s.shape.inputs;
          else if constexpr (std::is_same_v<T, GnbModel>)
            return static_cast<std::size_t>(s.params.density == Density::Gaussian ? s.mean.cols() : s.bandwidth.cols());
          else return static_cast<std::size_t>(s.x.cols());
        },
        state);
  }
};

inline Model train_classifier(const ClassifierSpec& spec, const Matrix& x, const std::vector<int>& y) {
  detail::check_training_input(x, y);
  detail::ClassIndex ci(y);
  const auto c = ci.classes.size();
  Model m{spec, ci.classes, KnnModel{}};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, KnnParams>) m.state = train_knn(p, x, ci.encoded);
        else if constexpr (std::is_same_v<T, GnbParams>) m.state = train_gnb(p, x, ci.encoded, c);
        else if constexpr (std::is_same_v<T, SvmParams>) m.state = train_svm(p, x, ci.encoded, c);
        else m.state = train_nn(p, x, ci.encoded, c);
      },
      spec);
  return m;
}

inline std::vector<int> decode_classes(const Model& m, const std::vector<std::size_t>& encoded) {
  std::vector<int> out;
  out.reserve(encoded.size());
  for (auto e : encoded) out.push_back(m.classes[e]);
  return out;
}

inline std::vector<int> predict(const Model& m, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.n_features())
    throw ArgumentError("model expects " + std::to_string(m.n_features()) + " features, got " +
                        std::to_string(x.cols()));
  if (!x.allFinite()) throw DataError("non-finite feature at prediction time");
  const auto c = m.classes.size();
  auto encoded = std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KnnModel>) return predict_knn(s, x, c);
        else if constexpr (std::is_same_v<T, GnbModel>) return predict_gnb(s, x);
        else if constexpr (std::is_same_v<T, SvmModel>) return predict_svm(s, x);
        else return predict_nn(s, x);
      },
      m.state);
  return decode_classes(m, encoded);
}

// ---------------------------------------------------------------------------
// Serialization: JSON envelope, float blocks as base64 little-endian float64.

namespace detail {

inline std::string encode_doubles(const double* data, std::size_t count) {
  std::vector<std::uint64_t> words(count);
  if (count) std::memcpy(words.data(), data, count * sizeof(double));
  if constexpr (std::endian::native == std::endian::big)
    for (auto& w : words) w = __builtin_bswap64(w);
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(count * sizeof(double)), '\0');
  out.resize(b64::encode(out.data(), words.data(), count * sizeof(double)));
  return out;
}

inline std::vector<double> decode_doubles(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::vector<unsigned char> bytes(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(bytes.data(), text.data(), text.size());
  // The decoder stops at the first non-alphabet character; only '=' padding may follow.
  const bool clean = text.find_first_not_of('=', read) == std::string::npos && text.size() - read <= 2;
  if (!clean || text.size() % 4 != 0 || written % sizeof(double) != 0) throw DataError("malformed base64 float block");
  std::vector<std::uint64_t> words(written / sizeof(double));
  std::memcpy(words.data(), bytes.data(), written);
  if constexpr (std::endian::native == std::endian::big)
    for (auto& w : words) w = __builtin_bswap64(w);
  std::vector<double> out(words.size());
  std::memcpy(out.data(), words.data(), written);
  return out;
}

template <typename M>
nlohmann::json block(const M& m) {
  Matrix rm = m;  // row-major copy
  return {{"rows", rm.rows()}, {"cols", rm.cols()}, {"data", encode_doubles(rm.data(), static_cast<std::size_t>(rm.size()))}};
}

inline Matrix unblock(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  auto v = decode_doubles(j.at("data").get<std::string>());
  if (static_cast<Index>(v.size()) != rows * cols) throw DataError("float block size mismatch");
  return Eigen::Map<Matrix>(v.data(), rows, cols);
}

inline nlohmann::json block(const std::vector<double>& v) {
  return {{"rows", 1}, {"cols", v.size()}, {"data", encode_doubles(v.data(), v.size())}};
}

inline std::vector<double> unblock_vector(const nlohmann::json& j) {
  Matrix m = unblock(j);
  return {m.data(), m.data() + m.size()};
}

}  // namespace detail

inline nlohmann::json save_model(const Model& m) {
  using detail::block;
  nlohmann::json j;
  j["family"] = family_name(m.spec);
  j["spec"] = to_json(m.spec);
  j["classes"] = m.classes;
  nlohmann::json& p = j["params"];
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          p["x"] = block(s.x);
          p["y"] = s.y;
        } else if constexpr (std::is_same_v<T, GnbModel>) {
          p["log_prior"] = block(s.log_prior.transpose());
          if (s.params.density == Density::Gaussian) {
            p["mean"] = block(s.mean);
            p["variance"] = block(s.variance);
          } else {
            p["bandwidth"] = block(s.bandwidth);
            p["samples"] = nlohmann::json::array();
            for (const auto& xs : s.samples) p["samples"].push_back(block(xs));
          }
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          p["x"] = block(s.x);
          p["y"] = s.y;
          p["n_classes"] = s.n_classes;
          p["pairs"] = nlohmann::json::array();
          for (const auto& pr : s.pairs)
            p["pairs"].push_back({{"first", pr.first},
                                  {"second", pr.second},
                                  {"index", pr.index},
                                  {"alpha", block(pr.machine.alpha)},
                                  {"rho", block(std::vector<double>{pr.machine.rho})},
                                  {"iterations", pr.machine.iterations},
                                  {"converged", pr.machine.converged}});
        } else {
          p["shape"] = {s.shape.inputs, s.shape.hidden, s.shape.outputs};
          p["weights"] = block(s.weights.transpose());
        }
      },
      m.state);
  return j;
}

inline Model load_model(const nlohmann::json& j) {
  using detail::unblock;
  Model m{classifier_spec_from_json(j.at("spec")), j.at("classes").get<std::vector<int>>(), KnnModel{}};
  const auto& p = j.at("params");
  try {
    std::visit(
        [&](const auto& spec) {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, KnnParams>) {
            m.state = KnnModel{spec, unblock(p.at("x")), p.at("y").get<std::vector<std::size_t>>()};
          } else if constexpr (std::is_same_v<T, GnbParams>) {
            GnbModel g;
            g.params = spec;
            g.log_prior = unblock(p.at("log_prior")).transpose();
            if (spec.density == Density::Gaussian) {
              g.mean = unblock(p.at("mean"));
              g.variance = unblock(p.at("variance"));
            } else {
              g.bandwidth = unblock(p.at("bandwidth"));
              for (const auto& b : p.at("samples")) g.samples.push_back(unblock(b));
            }
            m.state = std::move(g);
          } else if constexpr (std::is_same_v<T, SvmParams>) {
            SvmModel s;
            s.params = spec;
            s.x = unblock(p.at("x"));
            s.y = p.at("y").get<std::vector<std::size_t>>();
            s.n_classes = p.at("n_classes").get<std::size_t>();
            for (const auto& pj : p.at("pairs")) {
              SvmModel::Pair pr{pj.at("first").get<std::size_t>(), pj.at("second").get<std::size_t>(),
                                pj.at("index").get<std::vector<std::size_t>>(), {}};
              pr.machine.alpha = detail::unblock_vector(pj.at("alpha"));
              pr.machine.rho = detail::unblock_vector(pj.at("rho")).at(0);
              pr.machine.iterations = pj.at("iterations").get<std::size_t>();
              pr.machine.converged = pj.at("converged").get<bool>();
              s.pairs.push_back(std::move(pr));
            }
            m.state = std::move(s);
          } else {
            NnModel n;
            n.params = spec;
            const auto shape = p.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 3) throw DataError("nn shape must have 3 entries");
            n.shape = {shape[0], shape[1], shape[2]};
            n.weights = unblock(p.at("weights")).transpose();
            if (static_cast<std::size_t>(n.weights.size()) != n.shape.size()) throw DataError("nn weight count mismatch");
            m.state = std::move(n);
          }
        },
        m.spec);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model payload: ") + e.what());
  }
  return m;
}

}  // namespace meshlearn

#endif  // MESHLEARN_CLASSIFIERS_MODEL_HPP
