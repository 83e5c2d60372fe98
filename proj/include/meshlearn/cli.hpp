#ifndef MESHLEARN_CLI_HPP
#define MESHLEARN_CLI_HPP

// Command-line front end: synth, extract, cv and bench verbs.
//
// run_command() is the whole program minus main(), so tests can drive it with
// an argument vector and captured streams. Exit status: 0 success, 2 usage
// error (bad flag or flag value), 1 runtime error (bad bundle, pipeline
// failure). Files and directories created by a failing command are removed.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "meshlearn/crossval.hpp"
#include "meshlearn/dataset.hpp"
#include "meshlearn/mesh.hpp"
#include "meshlearn/neighborhood.hpp"
#include "meshlearn/synthgen.hpp"

#ifndef MESHLEARN_VERSION
#define MESHLEARN_VERSION "0.1.0"
#endif

namespace meshlearn::cli {

inline constexpr const char* kToolVersion = MESHLEARN_VERSION;

/// Remembers paths that did not exist when registered and deletes them on
/// destruction unless commit() was called.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) std::filesystem::remove_all(*it, ec);
  }
  void track(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) created_.push_back(p);
  }
  void commit() { committed_ = true; }

 private:
  std::vector<std::filesystem::path> created_;
  bool committed_ = false;
};

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

inline nlohmann::json provenance(const std::string& verb, const std::vector<std::string>& args,
                                 const nlohmann::json& resolved, const nlohmann::json& seed) {
  return {{"tool", "meshlearn"},
          {"version", kToolVersion},
          {"command", verb},
          {"argv", args},
          {"resolved_config", resolved},
          {"seed", seed}};
}

/// Flags shared by cv and bench cells. Unset optionals mean "search the grid"
/// for tunable fields and "auto" for transforms.
struct CvOptions {
  std::string data;
  std::string features = "raw";
  std::string classifier = "knn";
  std::size_t lag = 3;
  std::size_t p = 6;
  std::string estimator = "min-norm";
  double lambda = 0.0;
  std::size_t window = 1;
  std::string pca_k = "auto";
  std::string sl_threshold = "auto";
  double sl_spacing = 1.0;
  std::optional<std::size_t> k;
  std::optional<double> sigma;
  std::optional<double> cost;
  std::optional<double> bandwidth;
  double tolerance = 1e-3;
  std::size_t hidden = 10;
  double learning_rate = 0.1;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const CvOptions& o) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json("search"); };
  return {{"data", o.data},
          {"features", o.features},
          {"classifier", o.classifier},
          {"lag", o.lag},
          {"p", o.p},
          {"estimator", o.estimator},
          {"lambda", o.lambda},
          {"window", o.window},
          {"pca_k", o.pca_k},
          {"sl_threshold", o.sl_threshold},
          {"sl_spacing", o.sl_spacing},
          {"k", opt(o.k)},
          {"sigma", opt(o.sigma)},
          {"cost", opt(o.cost)},
          {"bandwidth", o.bandwidth ? nlohmann::json(*o.bandwidth) : nlohmann::json("auto")},
          {"tolerance", o.tolerance},
          {"hidden", o.hidden},
          {"learning_rate", o.learning_rate},
          {"epochs", o.epochs},
          {"seed", o.seed}};
}

namespace detail {

inline double parse_real_flag(const std::string& flag, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ArgumentError(flag + ": expected a number or 'auto', got '" + text + "'");
}

}  // namespace detail

inline PipelineSpec build_pipeline(const CvOptions& o) {
  PipelineSpec s;
  s.features = parse_pipeline_features(o.features);
  s.mesh.p = s.features == PipelineFeatures::Mad ? o.p : 0;
  s.mesh.estimator = parse_estimator(o.estimator);
  s.mesh.ridge_lambda = o.lambda;
  s.mesh.window = o.window;
  if (o.pca_k != "auto") {
    const double v = detail::parse_real_flag("--pca-k", o.pca_k);
    if (v < 1 || v != std::floor(v)) throw ArgumentError("--pca-k: expected a positive integer or 'auto'");
    s.pca_k = static_cast<std::size_t>(v);
  }
  if (o.sl_threshold != "auto") s.searchlight.threshold = detail::parse_real_flag("--sl-threshold", o.sl_threshold);
  s.searchlight.grid_spacing = o.sl_spacing;

  s.classifier = parse_classifier_name(o.classifier);
  std::visit(
      [&](auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, KnnParams>) {
          if (o.k) c.k = *o.k;
          else s.search.insert("knn.k");
        } else if constexpr (std::is_same_v<T, GnbParams>) {
          if (c.density == Density::Kde) {
            if (o.bandwidth) c.bandwidth = *o.bandwidth;
            else s.search.insert("gnb.bandwidth");
          }
        } else if constexpr (std::is_same_v<T, SvmParams>) {
          c.tolerance = o.tolerance;
          if (o.cost) c.cost = *o.cost;
          else s.search.insert("svm.cost");
          if (c.kernel == Kernel::Rbf) {
            if (o.sigma) c.sigma = *o.sigma;
            else s.search.insert("svm.sigma");
          }
        } else {
          c.hidden_units = o.hidden;
          c.learning_rate = o.learning_rate;
          c.epochs = o.epochs;
          c.seed = o.seed;
        }
      },
      s.classifier);
  s.validate();
  return s;
}

/// Loads the bundle, applies the label lag and cross-validates. The returned
/// JSON is the report without provenance.
inline nlohmann::json cv_report(const Dataset& loaded, const CvOptions& o) {
  const auto spec = build_pipeline(o);
  const Dataset d = shift_labels(loaded, o.lag);
  const auto report = run_cv(d, spec);
  auto j = to_json(report);
  j["lag"] = o.lag;
  j["n_samples_after_lag"] = d.n_samples();
  j["class_names"] = d.class_names;
  return j;
}

inline void add_cv_flags(CLI::App& app, CvOptions& o) {
  app.add_option("--features", o.features, "raw | mad | pca | searchlight")->capture_default_str();
  app.add_option("--lag", o.lag, "label shift in samples, applied per run")->capture_default_str();
  app.add_option("--p", o.p, "mesh order for --features mad (0 = raw)")->capture_default_str();
  app.add_option("--estimator", o.estimator, "min-norm | ridge")->capture_default_str();
  app.add_option("--lambda", o.lambda, "ridge penalty")->capture_default_str();
  app.add_option("--window", o.window, "samples pooled per arc-weight fit")->capture_default_str();
  app.add_option("--pca-k", o.pca_k, "number of components or 'auto' (training rank)")->capture_default_str();
  app.add_option("--sl-threshold", o.sl_threshold, "searchlight accuracy threshold or 'auto'")->capture_default_str();
  app.add_option("--sl-spacing", o.sl_spacing, "searchlight grid spacing")->capture_default_str();
  app.add_option("--k", o.k, "knn neighbors (default: searched)");
  app.add_option("--sigma", o.sigma, "rbf width (default: searched)");
  app.add_option("--cost", o.cost, "svm cost (default: searched)");
  app.add_option("--bandwidth", o.bandwidth, "kde bandwidth (default: Silverman)");
  app.add_option("--tolerance", o.tolerance, "svm stopping tolerance")->capture_default_str();
  app.add_option("--hidden", o.hidden, "nn hidden units (0 = softmax regression)")->capture_default_str();
  app.add_option("--learning-rate", o.learning_rate, "nn step size")->capture_default_str();
  app.add_option("--epochs", o.epochs, "nn full-batch epochs")->capture_default_str();
  app.add_option("--seed", o.seed, "nn initialization seed")->capture_default_str();
}

inline const std::vector<std::string>& bench_features() {
  static const std::vector<std::string> f = {"raw", "mad", "pca", "searchlight"};
  return f;
}

inline const std::vector<std::string>& bench_classifiers() {
  static const std::vector<std::string> c = {"knn", "gnb-kde", "svm-linear", "svm-rbf", "nn"};
  return c;
}

/// Feature methods of the original comparison that are not implemented here.
inline const std::vector<std::string>& bench_unimplemented() {
  static const std::vector<std::string> u = {"ica", "kernel-pca", "glm"};
  return u;
}

inline std::string bench_row_label(const std::string& feature, std::size_t p) {
  return feature == "mad" ? "mad(p=" + std::to_string(p) + ")" : feature;
}

inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Mesh arc descriptor toolkit", "meshlearn"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // synth
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset bundle");
  synth->add_option("--config", synth_config, "JSON generator config (missing keys use defaults)")
      ->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "bundle directory")->required();
  synth->add_option("--seed", synth_seed, "overrides the config seed");

  // extract
  std::string ex_data, ex_out, ex_estimator = "min-norm";
  std::size_t ex_p = 6, ex_window = 1;
  double ex_lambda = 0.0;
  auto* extract = app.add_subcommand("extract", "write mesh arc descriptors (.bin or .csv)");
  extract->add_option("--data", ex_data, "bundle directory")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--p", ex_p, "mesh order")->required();
  extract->add_option("--estimator", ex_estimator, "min-norm | ridge")->capture_default_str();
  extract->add_option("--lambda", ex_lambda, "ridge penalty")->capture_default_str();
  extract->add_option("--window", ex_window, "samples pooled per fit")->capture_default_str();
  extract->add_option("--out", ex_out, "output file; .csv for text, anything else binary")->required();

  // cv
  CvOptions cv_opts;
  std::string cv_out;
  auto* cv = app.add_subcommand("cv", "leave-one-run-out cross-validation");
  cv->add_option("--data", cv_opts.data, "bundle directory")->required()->check(CLI::ExistingDirectory);
  cv->add_option("--classifier", cv_opts.classifier, "knn | gnb | gnb-kde | svm-linear | svm-rbf | nn")->required();
  add_cv_flags(*cv, cv_opts);
  cv->add_option("--out", cv_out, "report.json path")->required();

  // bench
  std::string bench_data, bench_out;
  std::size_t bench_lag = 3, bench_p = 6;
  std::uint64_t bench_seed = 0;
  std::vector<std::string> bench_feats = bench_features(), bench_clfs = bench_classifiers();
  auto* bench = app.add_subcommand("bench", "feature x classifier grid");
  bench->add_option("--data", bench_data, "bundle directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--out", bench_out, "output directory")->required();
  bench->add_option("--lag", bench_lag, "label shift in samples")->capture_default_str();
  bench->add_option("--p", bench_p, "mesh order of the mad row")->capture_default_str();
  bench->add_option("--seed", bench_seed, "nn initialization seed")->capture_default_str();
  bench->add_option("--features", bench_feats, "subset of rows to run")->capture_default_str();
  bench->add_option("--classifiers", bench_clfs, "subset of columns to run")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "meshlearn: usage error: " << e.what() << '\n';
    return 2;
  }

  OutputGuard guard;
  try {
    if (synth->parsed()) {
      SynthConfig cfg;
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw ArgumentError(synth_config + ": " + e.what());
        }
        try {
          cfg = synth_config_from_json(j);
        } catch (const DataError& e) {
          throw ArgumentError(e.what());
        }
      }
      if (synth_seed) cfg.seed = *synth_seed;
      cfg.validate();
      const auto dir = std::filesystem::path(synth_out);
      guard.track(dir);
      const auto d = generate_synthetic(cfg);
      guard.track(dir / "manifest.json");
      guard.track(dir / "coords.csv");
      guard.track(dir / "data.csv");
      guard.track(dir / "labels.csv");
      guard.track(dir / "synth_config.json");
      const auto prov = provenance("synth", args, to_json(cfg), cfg.seed);
      write_dataset(d, dir, {{"provenance", prov}});
      write_json_file(to_json(cfg), dir / "synth_config.json");
      out << "wrote " << d.n_samples() << " samples x " << d.n_voxels() << " voxels to " << dir.string() << '\n';
    } else if (extract->parsed()) {
      MeshConfig mc;
      mc.p = ex_p;
      mc.estimator = parse_estimator(ex_estimator);
      mc.ridge_lambda = ex_lambda;
      mc.window = ex_window;
      mc.validate();
      if (mc.p < 1) throw ArgumentError("--p must be >= 1 for extract");
      const auto d = load_dataset(ex_data);
      const auto table = build_neighborhood_table(d.coords, mc.p);
      const auto mad = extract_mad(d, table, mc);
      const std::filesystem::path path(ex_out);
      nlohmann::json resolved = to_json(mc);
      resolved["data"] = ex_data;
      const auto prov = provenance("extract", args, resolved, nullptr);
      guard.track(path);
      if (path.extension() == ".csv") {
        auto side = path;
        side += ".json";
        guard.track(side);
        write_mad_csv(mad, path);
        write_json_file({{"header", mad_header(mad)}, {"provenance", prov}}, side);
      } else {
        write_mad_bin(mad, path, {{"provenance", prov}});
      }
      out << "wrote " << mad.values.rows() << " x " << mad.values.cols() << " descriptors to " << path.string() << '\n';
    } else if (cv->parsed()) {
      build_pipeline(cv_opts);  // flag errors surface before any work
      const auto d = load_dataset(cv_opts.data);
      const std::filesystem::path path(cv_out);
      auto report = cv_report(d, cv_opts);
      report["provenance"] = provenance("cv", args, to_json(cv_opts), cv_opts.seed);
      guard.track(path);
      write_json_file(report, path);
      out << "mean accuracy " << meshlearn::detail::format_double(report["mean_accuracy"].get<double>()) << " over "
          << report["fold_accuracies"].size() << " folds\n";
    } else if (bench->parsed()) {
      for (const auto& f : bench_feats)
        if (std::find(bench_features().begin(), bench_features().end(), f) == bench_features().end())
          throw ArgumentError("--features: unknown feature method '" + f + "'");
      for (const auto& c : bench_clfs) parse_classifier_name(c);
      const auto d = load_dataset(bench_data);
      const std::filesystem::path dir(bench_out);
      guard.track(dir);
      std::filesystem::create_directories(dir);

      nlohmann::json cells = nlohmann::json::object();
      std::vector<std::vector<std::string>> table;
      for (const auto& f : bench_feats) {
        std::vector<std::string> row{bench_row_label(f, bench_p)};
        for (const auto& c : bench_clfs) {
          CvOptions o;
          o.data = bench_data;
          o.features = f;
          o.classifier = c;
          o.lag = bench_lag;
          o.p = bench_p;
          o.seed = bench_seed;
          auto report = cv_report(d, o);
          report["provenance"] = provenance("bench", args, to_json(o), o.seed);
          const auto cell_dir = dir / (f + "__" + c);
          guard.track(cell_dir);
          std::filesystem::create_directories(cell_dir);
          write_json_file(report, cell_dir / "report.json");
          const double acc = report["mean_accuracy"].get<double>();
          cells[row.front()][c] = acc;
          row.push_back(meshlearn::detail::format_double(acc));
          out << row.front() << " x " << c << ": " << row.back() << '\n' << std::flush;
        }
        table.push_back(std::move(row));
      }
      for (const auto& u : bench_unimplemented())
        if (bench_feats == bench_features()) {
          std::vector<std::string> row{u};
          row.resize(bench_clfs.size() + 1, "n/a");
          table.push_back(std::move(row));
        }

      guard.track(dir / "bench_table.csv");
      std::ofstream csv(dir / "bench_table.csv", std::ios::binary);
      if (!csv) throw DataError("cannot open " + (dir / "bench_table.csv").string() + " for writing");
      csv << "features";
      for (const auto& c : bench_clfs) csv << ',' << c;
      csv << '\n';
      for (const auto& row : table) {
        for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
        csv << '\n';
      }
      csv.close();
      nlohmann::json resolved = {{"data", bench_data}, {"lag", bench_lag}, {"p", bench_p}, {"seed", bench_seed},
                                 {"features", bench_feats}, {"classifiers", bench_clfs},
                                 {"not_implemented", bench_unimplemented()}};
      guard.track(dir / "bench.json");
      write_json_file({{"cells", cells}, {"provenance", provenance("bench", args, resolved, bench_seed)}},
                      dir / "bench.json");
    }
    guard.commit();
    return 0;
  } catch (const ArgumentError& e) {
    err << "meshlearn: usage error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "meshlearn: data error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "meshlearn: pipeline error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace meshlearn::cli

#endif  // MESHLEARN_CLI_HPP
