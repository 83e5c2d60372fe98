#ifndef MESHLEARN_CROSSVAL_HPP
#define MESHLEARN_CROSSVAL_HPP

/*
 Leave-one-run-out evaluation of a feature pipeline.

 For every run r the remaining runs form the training portion. Everything
 that is fitted (PCA axes, searchlight scores and threshold, classifier
 hyperparameters, the classifier itself) sees training rows only. MAD
 features are computed per sample from a coordinate-only neighborhood table,
 so they are extracted once and split afterwards.

 Hyperparameter grids (inner leave-one-run-out on the training portion):

   knn.k        1 .. floor(sqrt(M_tr))
   svm.sigma    e^g, g = -10 .. 5
   svm.cost     e^g, g = -10 .. 5
   gnb.bandwidth  "auto" only

 Ties in inner accuracy keep the smaller grid value (sigma before cost).
*/

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshlearn/classifiers/model.hpp"
#include "meshlearn/dataset.hpp"
#include "meshlearn/mesh.hpp"
#include "meshlearn/neighborhood.hpp"
#include "meshlearn/pca.hpp"
#include "meshlearn/searchlight.hpp"

namespace meshlearn {

enum class PipelineFeatures { Raw, Mad, Pca, Searchlight };

inline std::string to_string(PipelineFeatures f) {
  switch (f) {
    case PipelineFeatures::Raw: return "raw";
    case PipelineFeatures::Mad: return "mad";
    case PipelineFeatures::Pca: return "pca";
    case PipelineFeatures::Searchlight: return "searchlight";
  }
  return "?";
}

inline PipelineFeatures parse_pipeline_features(const std::string& s) {
  if (s == "raw") return PipelineFeatures::Raw;
  if (s == "mad") return PipelineFeatures::Mad;
  if (s == "pca") return PipelineFeatures::Pca;
  if (s == "searchlight") return PipelineFeatures::Searchlight;
  throw ArgumentError("unknown feature mode '" + s + "' (expected raw, mad, pca, searchlight)");
}

struct PipelineSpec {
  PipelineFeatures features = PipelineFeatures::Raw;
  MeshConfig mesh;
  std::optional<std::size_t> pca_k;  // empty = rank of the training data
  SearchlightConfig searchlight;
  ClassifierSpec classifier = KnnParams{};
  std::set<std::string> search;  // tuned fields: knn.k, svm.cost, svm.sigma, gnb.bandwidth

  void validate() const {
    if (features == PipelineFeatures::Mad) mesh.validate();
    if (features == PipelineFeatures::Searchlight) searchlight.validate();
    if (pca_k && *pca_k < 1) throw ArgumentError("pca_k must be >= 1");
    for (const auto& field : search) {
      const bool ok = (field == "knn.k" && std::holds_alternative<KnnParams>(classifier)) ||
                      (field == "svm.cost" && std::holds_alternative<SvmParams>(classifier)) ||
                      (field == "svm.sigma" && std::holds_alternative<SvmParams>(classifier) &&
                       std::get<SvmParams>(classifier).kernel == Kernel::Rbf) ||
                      (field == "gnb.bandwidth" && std::holds_alternative<GnbParams>(classifier) &&
                       std::get<GnbParams>(classifier).density == Density::Kde);
      if (!ok) throw ArgumentError("'" + field + "' is not a tunable field of classifier " + classifier_name(classifier));
    }
  }
};

/// Every tunable field of the spec's classifier.
inline std::set<std::string> default_search(const ClassifierSpec& spec) {
  if (std::holds_alternative<KnnParams>(spec)) return {"knn.k"};
  if (auto g = std::get_if<GnbParams>(&spec)) return g->density == Density::Kde ? std::set<std::string>{"gnb.bandwidth"}
                                                                                  : std::set<std::string>{};
  if (auto s = std::get_if<SvmParams>(&spec))
    return s->kernel == Kernel::Rbf ? std::set<std::string>{"svm.cost", "svm.sigma"} : std::set<std::string>{"svm.cost"};
  return {};
}

inline nlohmann::json to_json(const PipelineSpec& s) {
  nlohmann::json j;
  j["features"] = to_string(s.features);
  j["mesh"] = to_json(s.mesh);
  if (s.pca_k) j["pca_k"] = *s.pca_k;
  else j["pca_k"] = "auto";
  nlohmann::json sl;
  sl["block"] = s.searchlight.block;
  if (s.searchlight.threshold) sl["threshold"] = *s.searchlight.threshold;
  else sl["threshold"] = "auto";
  sl["grid_spacing"] = s.searchlight.grid_spacing;
  j["searchlight"] = sl;
  j["classifier"] = to_json(s.classifier);
  j["classifier_name"] = classifier_name(s.classifier);
  j["search"] = s.search;
  return j;
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    throw ArgumentError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " labels");
  if (truth.empty()) throw ArgumentError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct HyperGrids {
  std::vector<std::size_t> knn_k;
  std::vector<int> log_sigma;
  std::vector<int> log_cost;
};

inline std::vector<int> log_grid() {
  std::vector<int> g(16);
  std::iota(g.begin(), g.end(), -10);
  return g;
}

inline std::vector<std::size_t> knn_k_grid(std::size_t n_train) {
  const auto top = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_train))));
  std::vector<std::size_t> g(top);
  std::iota(g.begin(), g.end(), std::size_t{1});
  return g;
}

inline HyperGrids hyper_grids(const PipelineSpec& spec, std::size_t n_train) {
  HyperGrids g;
  if (spec.search.count("knn.k")) g.knn_k = knn_k_grid(n_train);
  if (spec.search.count("svm.sigma")) g.log_sigma = log_grid();
  if (spec.search.count("svm.cost")) g.log_cost = log_grid();
  return g;
}

inline nlohmann::json to_json(const HyperGrids& g, const PipelineSpec& spec) {
  nlohmann::json j = nlohmann::json::object();
  if (spec.search.count("knn.k")) j["knn.k"] = g.knn_k;
  if (spec.search.count("svm.sigma")) j["svm.log_sigma"] = g.log_sigma;
  if (spec.search.count("svm.cost")) j["svm.log_cost"] = g.log_cost;
  if (spec.search.count("gnb.bandwidth")) j["gnb.bandwidth"] = {"auto"};
  return j;
}

struct TuneResult {
  ClassifierSpec tuned;
  nlohmann::json chosen = nlohmann::json::object();
  nlohmann::json grids = nlohmann::json::object();
  std::map<std::string, double> inner_accuracy;  // per grid point label
};

namespace detail {

struct InnerFold {
  std::vector<std::size_t> train, test;
  ClassIndex classes;
};

inline std::vector<InnerFold> usable_inner_folds(const std::vector<int>& y, const std::vector<int>& runs) {
  std::vector<InnerFold> out;
  for (auto& f : inner_folds(runs)) {
    if (f.train.empty() || f.test.empty()) continue;
    ClassIndex ci(select(y, f.train));
    if (ci.classes.size() < 2) continue;
    out.push_back({std::move(f.train), std::move(f.test), std::move(ci)});
  }
  return out;
}

inline std::size_t count_hits(const std::vector<std::size_t>& encoded_pred, const ClassIndex& ci,
                              const std::vector<int>& y, const std::vector<std::size_t>& test) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < test.size(); ++q) hits += ci.classes[encoded_pred[q]] == y[test[q]];
  return hits;
}

inline Matrix sub_matrix(const Matrix& m, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Index>(r), static_cast<Index>(c)) = m(static_cast<Index>(rows[r]), static_cast<Index>(cols[c]));
  return out;
}

/// Inner-CV hits of an arbitrary spec (generic path).
inline std::size_t inner_hits(const ClassifierSpec& spec, const Matrix& x, const std::vector<int>& y,
                              const std::vector<InnerFold>& folds) {
  std::size_t hits = 0;
  for (const auto& f : folds) {
    const auto model = train_classifier(spec, select_rows(x, f.train), select(y, f.train));
    const auto pred = predict(model, select_rows(x, f.test));
    for (std::size_t q = 0; q < f.test.size(); ++q) hits += pred[q] == y[f.test[q]];
  }
  return hits;
}

}  // namespace detail

/// Picks the searched fields of `spec` by inner leave-one-run-out CV on
/// (x, y, runs), which must all come from the training portion.
inline TuneResult tune_hyperparams(const Matrix& x, const std::vector<int>& y, const std::vector<int>& runs,
                                   const PipelineSpec& spec) {
  if (spec.search.empty()) throw ArgumentError("tune_hyperparams: no field marked for search");
  const auto grids = hyper_grids(spec, y.size());
  TuneResult res;
  res.tuned = spec.classifier;
  res.grids = to_json(grids, spec);
  const auto folds = detail::usable_inner_folds(y, runs);

  if (spec.search.count("knn.k")) {
    if (grids.knn_k.empty()) throw ArgumentError("empty knn.k grid");
    std::vector<std::size_t> hits(grids.knn_k.size(), 0);
    const auto kmax = grids.knn_k.back();
    for (const auto& f : folds) {
      const Matrix d = knn::squared_distances(select_rows(x, f.test), select_rows(x, f.train));
      for (Index q = 0; q < d.rows(); ++q) {
        const auto ranked = knn::ranked_by_distance({d.row(q).data(), static_cast<std::size_t>(d.cols())}, kmax);
        for (std::size_t gi = 0; gi < grids.knn_k.size(); ++gi) {
          const auto c = knn::vote(ranked, f.classes.encoded, grids.knn_k[gi], f.classes.classes.size());
          hits[gi] += f.classes.classes[c] == y[f.test[static_cast<std::size_t>(q)]];
        }
      }
    }
    std::size_t best = 0;
    for (std::size_t gi = 0; gi < hits.size(); ++gi) {
      res.inner_accuracy["knn.k=" + std::to_string(grids.knn_k[gi])] = static_cast<double>(hits[gi]);
      if (hits[gi] > hits[best]) best = gi;
    }
    std::get<KnnParams>(res.tuned).k = grids.knn_k[best];
    res.chosen["knn.k"] = grids.knn_k[best];
  }

  if (std::holds_alternative<SvmParams>(spec.classifier) &&
      (spec.search.count("svm.cost") || spec.search.count("svm.sigma"))) {
    SvmParams base = std::get<SvmParams>(spec.classifier);
    const std::vector<std::optional<int>> sigmas = [&] {
      std::vector<std::optional<int>> v;
      if (grids.log_sigma.empty()) v.push_back(std::nullopt);
      for (int g : grids.log_sigma) v.push_back(g);
      return v;
    }();
    const std::vector<std::optional<int>> costs = [&] {
      std::vector<std::optional<int>> v;
      if (grids.log_cost.empty()) v.push_back(std::nullopt);
      for (int g : grids.log_cost) v.push_back(g);
      return v;
    }();
    // Squared distances (rbf) or inner products (linear) over the training portion, computed once.
    const Matrix base_matrix = base.kernel == Kernel::Rbf ? knn::squared_distances(x, x) : Matrix(x * x.transpose());
    std::size_t best_hits = 0;
    bool have_best = false;
    SvmParams best = base;
    for (const auto& ls : sigmas) {
      SvmParams p = base;
      if (ls) p.sigma = std::exp(static_cast<double>(*ls));
      const Matrix kernel = svm::kernel_from(base_matrix, p);
      for (const auto& lc : costs) {
        if (lc) p.cost = std::exp(static_cast<double>(*lc));
        std::size_t hits = 0;
        for (const auto& f : folds) {
          const auto m = train_svm_with_kernel(p, Matrix(), f.classes.encoded, f.classes.classes.size(),
                                               detail::sub_matrix(kernel, f.train, f.train));
          const auto pred = predict_svm_with_kernel(m, detail::sub_matrix(kernel, f.test, f.train));
          hits += detail::count_hits(pred, f.classes, y, f.test);
        }
        std::string label;
        if (ls) label += "svm.log_sigma=" + std::to_string(*ls);
        if (lc) label += std::string(label.empty() ? "" : ",") + "svm.log_cost=" + std::to_string(*lc);
        res.inner_accuracy[label] = static_cast<double>(hits);
        if (!have_best || hits > best_hits) {
          have_best = true;
          best_hits = hits;
          best = p;
        }
      }
    }
    res.tuned = best;
    if (spec.search.count("svm.sigma")) {
      res.chosen["svm.sigma"] = best.sigma;
      res.chosen["svm.log_sigma"] = std::lround(std::log(best.sigma));
    }
    if (spec.search.count("svm.cost")) {
      res.chosen["svm.cost"] = best.cost;
      res.chosen["svm.log_cost"] = std::lround(std::log(best.cost));
    }
  }

  if (spec.search.count("gnb.bandwidth")) {
    std::get<GnbParams>(res.tuned).bandwidth = std::nullopt;
    res.chosen["gnb.bandwidth"] = "auto";
  }

  // Normalize the per-point tallies to accuracies.
  std::size_t evaluated = 0;
  for (const auto& f : folds) evaluated += f.test.size();
  for (auto& [k, v] : res.inner_accuracy) v = evaluated ? v / static_cast<double>(evaluated) : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Outer loop

struct FoldReport {
  int held_out_run = 0;
  bool skipped = false;
  std::string skip_reason;
  double accuracy = 0.0;
  std::vector<int> train_runs;
  std::size_t n_train = 0;
  std::vector<std::size_t> test_samples;  // dataset sample ids, in evaluation order
  std::vector<int> truth;
  std::vector<int> predictions;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  nlohmann::json chosen_hyperparams = nlohmann::json::object();
  nlohmann::json search_grids = nlohmann::json::object();
  nlohmann::json transform = nlohmann::json::object();  // pca / searchlight state
};

struct CvReport {
  PipelineSpec spec;
  std::vector<FoldReport> folds;
  std::vector<double> fold_accuracies;  // evaluated folds only
  double mean_accuracy = 0.0;
};

inline nlohmann::json to_json(const FoldReport& f) {
  nlohmann::json j;
  j["held_out_run"] = f.held_out_run;
  j["skipped"] = f.skipped;
  if (f.skipped) {
    j["skip_reason"] = f.skip_reason;
    j["accuracy"] = nullptr;
  } else {
    j["accuracy"] = f.accuracy;
  }
  j["train_runs"] = f.train_runs;
  j["n_train"] = f.n_train;
  j["test_samples"] = f.test_samples;
  j["truth"] = f.truth;
  j["predictions"] = f.predictions;
  j["confusion"] = f.confusion;
  j["chosen_hyperparams"] = f.chosen_hyperparams;
  j["search_grids"] = f.search_grids;
  j["transform"] = f.transform;
  return j;
}

inline nlohmann::json to_json(const CvReport& r) {
  nlohmann::json j;
  j["pipeline"] = to_json(r.spec);
  j["folds"] = nlohmann::json::array();
  for (const auto& f : r.folds) j["folds"].push_back(to_json(f));
  j["fold_accuracies"] = r.fold_accuracies;
  j["mean_accuracy"] = r.mean_accuracy;
  return j;
}

namespace detail {

struct SearchlightState {
  std::vector<std::size_t> mask;
  double threshold = 0.0;
  bool fallback = false;
  nlohmann::json inner = nlohmann::json::object();
};

/// Scores voxels on the training rows and fixes the mask. An automatic
/// threshold is the grid value with the best inner-CV accuracy of the base
/// classifier on the selected voxels.
inline SearchlightState fit_searchlight(const Dataset& d, const std::vector<std::size_t>& train_rows,
                                        const PipelineSpec& spec) {
  const Dataset train = subset(d, train_rows);
  const auto folds = inner_folds(train.run_ids);
  const auto scores = searchlight_scores(train, spec.searchlight, folds);
  SearchlightState st;
  auto select_with_fallback = [&](double t, bool& fallback) {
    auto mask = searchlight_select(scores, t);
    fallback = mask.empty();
    if (fallback) mask = {searchlight_top1(scores)};
    return mask;
  };
  if (spec.searchlight.threshold) {
    st.threshold = *spec.searchlight.threshold;
  } else {
    const auto inner = usable_inner_folds(train.labels, train.run_ids);
    std::size_t best_hits = 0;
    bool have = false;
    for (double t : searchlight_threshold_grid()) {
      bool fb = false;
      const auto mask = select_with_fallback(t, fb);
      const std::size_t hits = inner.empty() ? 0 : inner_hits(spec.classifier, select_cols(train.intensities, mask),
                                                               train.labels, inner);
      st.inner[detail::format_double(t)] = hits;
      if (!have || hits > best_hits) {
        have = true;
        best_hits = hits;
        st.threshold = t;
      }
    }
  }
  st.mask = select_with_fallback(st.threshold, st.fallback);
  return st;
}

}  // namespace detail

inline CvReport run_cv(const Dataset& d, const PipelineSpec& spec) {
  spec.validate();
  const auto runs = d.runs();
  if (runs.size() < 2) throw ArgumentError("cross-validation needs at least 2 runs, dataset has " +
                                           std::to_string(runs.size()));

  // Per-sample features; rows map to dataset samples through source_rows.
  FeatureMatrix base;
  if (spec.features == PipelineFeatures::Mad)
    base = features_for(FeatureMode::Mad, d, spec.mesh);
  else
    base = features_for(FeatureMode::Raw, d, spec.mesh);
  const auto labels = select(d.labels, base.source_rows);
  const auto row_runs = select(d.run_ids, base.source_rows);
  const std::set<int> all_classes(labels.begin(), labels.end());
  const auto n_classes = d.n_classes();

  CvReport report;
  report.spec = spec;
  for (int r : runs) {
    FoldReport fold;
    fold.held_out_run = r;
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < row_runs.size(); ++i) (row_runs[i] == r ? te : tr).push_back(i);
    {
      std::set<int> s;
      for (auto i : tr) s.insert(row_runs[i]);
      fold.train_runs.assign(s.begin(), s.end());
    }
    fold.n_train = tr.size();
    const auto y_tr = select(labels, tr);
    const std::set<int> train_classes(y_tr.begin(), y_tr.end());
    if (te.empty()) {
      fold.skipped = true;
      fold.skip_reason = "no feature rows in held-out run";
    } else if (train_classes != all_classes) {
      fold.skipped = true;
      std::vector<int> missing;
      std::set_difference(all_classes.begin(), all_classes.end(), train_classes.begin(), train_classes.end(),
                          std::back_inserter(missing));
      fold.skip_reason = "class " + std::to_string(missing.front()) + " absent from training runs";
    }
    if (fold.skipped) {
      report.folds.push_back(std::move(fold));
      continue;
    }

    Matrix x_tr = select_rows(base.values, tr);
    Matrix x_te = select_rows(base.values, te);
    if (spec.features == PipelineFeatures::Pca) {
      const auto limit = static_cast<std::size_t>(std::min(x_tr.rows(), x_tr.cols()));
      const PcaModel pca = spec.pca_k ? pca_fit(x_tr, std::min(*spec.pca_k, limit)) : pca_fit_auto(x_tr);
      x_tr = pca_transform(pca, x_tr);
      x_te = pca_transform(pca, x_te);
      fold.transform["pca_k"] = pca.components.rows();
      fold.transform["pca_explained_variance_total"] = pca.explained_variance.sum();
    } else if (spec.features == PipelineFeatures::Searchlight) {
      const auto st = detail::fit_searchlight(d, select(base.source_rows, tr), spec);
      x_tr = select_cols(x_tr, st.mask);
      x_te = select_cols(x_te, st.mask);
      fold.transform["searchlight_threshold"] = st.threshold;
      fold.transform["searchlight_mask"] = st.mask;
      fold.transform["searchlight_fallback_top1"] = st.fallback;
      if (!st.inner.empty()) fold.transform["searchlight_threshold_inner_hits"] = st.inner;
    }

    ClassifierSpec clf = spec.classifier;
    if (!spec.search.empty()) {
      const auto tuned = tune_hyperparams(x_tr, y_tr, select(row_runs, tr), spec);
      clf = tuned.tuned;
      fold.chosen_hyperparams = tuned.chosen;
      fold.search_grids = tuned.grids;
    }
    fold.chosen_hyperparams["classifier"] = to_json(clf);

    const auto model = train_classifier(clf, x_tr, y_tr);
    fold.predictions = predict(model, x_te);
    fold.truth = select(labels, te);
    fold.test_samples = select(base.source_rows, te);
    fold.accuracy = accuracy(fold.predictions, fold.truth);
    fold.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t q = 0; q < te.size(); ++q)
      ++fold.confusion[static_cast<std::size_t>(fold.truth[q])][static_cast<std::size_t>(fold.predictions[q])];
    report.fold_accuracies.push_back(fold.accuracy);
    report.folds.push_back(std::move(fold));
  }
  if (!report.fold_accuracies.empty())
    report.mean_accuracy = std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(), 0.0) /
                           static_cast<double>(report.fold_accuracies.size());
  return report;
}

}  // namespace meshlearn

#endif  // MESHLEARN_CROSSVAL_HPP
