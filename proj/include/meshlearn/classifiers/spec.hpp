#ifndef MESHLEARN_CLASSIFIERS_SPEC_HPP
#define MESHLEARN_CLASSIFIERS_SPEC_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshlearn/core.hpp"

namespace meshlearn {

struct KnnParams {
  std::size_t k = 1;
};

enum class Density { Gaussian, Kde };

struct GnbParams {
  Density density = Density::Gaussian;
  std::optional<double> bandwidth;  // kde only; empty = Silverman's rule
};

enum class Kernel { Linear, Rbf };

struct SvmParams {
  Kernel kernel = Kernel::Linear;
  double sigma = 1.0;  // rbf width
  double cost = 1.0;
  double tolerance = 1e-3;
  std::size_t max_iterations = 10'000'000;
};

/// Defaults stand in for the unspecified toolbox defaults.
struct NnParams {
  std::size_t hidden_units = 10;
  double learning_rate = 0.1;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
};

using ClassifierSpec = std::variant<KnnParams, GnbParams, SvmParams, NnParams>;

inline std::string family_name(const ClassifierSpec& s) {
  static constexpr const char* names[] = {"knn", "gnb", "svm", "nn"};
  return names[s.index()];
}

/// CLI / report name: knn, gnb, gnb-kde, svm-linear, svm-rbf, nn.
inline std::string classifier_name(const ClassifierSpec& s) {
  if (auto g = std::get_if<GnbParams>(&s)) return g->density == Density::Kde ? "gnb-kde" : "gnb";
  if (auto v = std::get_if<SvmParams>(&s)) return v->kernel == Kernel::Rbf ? "svm-rbf" : "svm-linear";
  return family_name(s);
}

inline ClassifierSpec parse_classifier_name(const std::string& name) {
  if (name == "knn") return KnnParams{};
  if (name == "gnb") return GnbParams{};
  if (name == "gnb-kde") return GnbParams{Density::Kde, std::nullopt};
  if (name == "svm-linear") return SvmParams{};
  if (name == "svm-rbf") return SvmParams{.kernel = Kernel::Rbf};
  if (name == "nn") return NnParams{};
  throw ArgumentError("unknown classifier '" + name + "' (expected knn, gnb, gnb-kde, svm-linear, svm-rbf, nn)");
}

inline nlohmann::json to_json(const ClassifierSpec& s) {
  nlohmann::json j;
  j["family"] = family_name(s);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, KnnParams>) {
          j["k"] = p.k;
        } else if constexpr (std::is_same_v<T, GnbParams>) {
          j["density"] = p.density == Density::Kde ? "kde" : "gaussian";
          if (p.density == Density::Kde) {
            if (p.bandwidth) j["bandwidth"] = *p.bandwidth;
            else j["bandwidth"] = "auto";
          }
        } else if constexpr (std::is_same_v<T, SvmParams>) {
          j["kernel"] = p.kernel == Kernel::Rbf ? "rbf" : "linear";
          if (p.kernel == Kernel::Rbf) j["sigma"] = p.sigma;
          j["cost"] = p.cost;
          j["tolerance"] = p.tolerance;
          j["max_iterations"] = p.max_iterations;
        } else {
          j["hidden_units"] = p.hidden_units;
          j["learning_rate"] = p.learning_rate;
          j["epochs"] = p.epochs;
          j["seed"] = p.seed;
        }
      },
      s);
  return j;
}

inline ClassifierSpec classifier_spec_from_json(const nlohmann::json& j) {
  const auto family = j.at("family").get<std::string>();
  if (family == "knn") return KnnParams{j.at("k").get<std::size_t>()};
  if (family == "gnb") {
    GnbParams g;
    g.density = j.at("density").get<std::string>() == "kde" ? Density::Kde : Density::Gaussian;
    if (g.density == Density::Kde && j.at("bandwidth").is_number()) g.bandwidth = j.at("bandwidth").get<double>();
    return g;
  }
  if (family == "svm") {
    SvmParams s;
    s.kernel = j.at("kernel").get<std::string>() == "rbf" ? Kernel::Rbf : Kernel::Linear;
    if (s.kernel == Kernel::Rbf) s.sigma = j.at("sigma").get<double>();
    s.cost = j.at("cost").get<double>();
    s.tolerance = j.value("tolerance", 1e-3);
    s.max_iterations = j.value("max_iterations", std::size_t{10'000'000});
    return s;
  }
  if (family == "nn") {
    NnParams n;
    n.hidden_units = j.at("hidden_units").get<std::size_t>();
    n.learning_rate = j.at("learning_rate").get<double>();
    n.epochs = j.at("epochs").get<std::size_t>();
    n.seed = j.at("seed").get<std::uint64_t>();
    return n;
  }
  throw DataError("unknown classifier family '" + family + "'");
}

namespace detail {

/// Maps arbitrary class ids onto 0..C-1 in ascending id order.
struct ClassIndex {
  std::vector<int> classes;  // ascending
  std::vector<std::size_t> encoded;

  explicit ClassIndex(const std::vector<int>& y) {
    std::map<int, std::size_t> pos;
    for (int c : y) pos.emplace(c, 0);
    std::size_t k = 0;
    for (auto& [c, i] : pos) {
      i = k++;
      classes.push_back(c);
    }
    encoded.reserve(y.size());
    for (int c : y) encoded.push_back(pos[c]);
  }
};

/// Index of the first maximum, i.e. ties go to the smallest class.
template <typename Row>
std::size_t argmax_first(const Row& r) {
  std::size_t best = 0;
  for (Index i = 1; i < r.size(); ++i)
    if (r(i) > r(static_cast<Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

inline void check_training_input(const Matrix& x, const std::vector<int>& y) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw ArgumentError("feature rows (" + std::to_string(x.rows()) + ") != label count (" + std::to_string(y.size()) +
                        ")");
  if (x.rows() < 2) throw ArgumentError("training needs at least 2 samples");
  if (x.cols() < 1) throw ArgumentError("training needs at least 1 feature");
  if (!x.allFinite()) throw DataError("non-finite training feature");
  std::vector<int> sorted = y;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw ArgumentError("training set contains a single class");
}

}  // namespace detail
}  // namespace meshlearn

#endif  // MESHLEARN_CLASSIFIERS_SPEC_HPP
