#include <cstring>
#include <fstream>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "meshlearn/dataset.hpp"
#include "meshlearn/mesh.hpp"
#include "meshlearn/neighborhood.hpp"
#include "meshlearn/synthgen.hpp"
#include "oracles.hpp"

using namespace meshlearn;

namespace {

Dataset tiny() {
  Dataset d;
  d.coords = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  d.intensities = Matrix(5, 4);
  d.intensities << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20;
  d.labels = {0, 1, 0, 1, 1};
  d.run_ids = {0, 0, 0, 1, 1};
  d.class_names = {"faces", "tools"};
  return d;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// dataset

TEST(Dataset, BundleDimensionsReadBack) {
  oracle::TempDir tmp;
  write_dataset(tiny(), tmp.path());
  const auto d = load_dataset(tmp.path());
  EXPECT_EQ(d.n_voxels(), 4u);
  EXPECT_EQ(d.n_samples(), 5u);
  EXPECT_EQ(d.n_classes(), 2u);
  EXPECT_EQ(d.runs().size(), 2u);
}

TEST(Dataset, RoundTripIsExactOnRandomBundles) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = oracle::random_dataset(seed, 7 + seed, 3, 4, 3);
    // Values that stress shortest round-trip formatting.
    d.intensities(0, 0) = 0.1 + 0.2;
    d.intensities(1, 1) = -1e-310;
    d.intensities(2, 2) = 1.7976931348623157e308;
    d.coords[0].x = 1.0 / 3.0;
    oracle::TempDir tmp;
    write_dataset(d, tmp.path());
    EXPECT_TRUE(load_dataset(tmp.path()) == d) << "seed " << seed;
  }
}

TEST(Dataset, ShortDataRowNamesFileAndRow) {
  oracle::TempDir tmp;
  write_dataset(tiny(), tmp.path());
  write_text(tmp / "data.csv", "1,2,3,4\n5,6,7\n9,10,11,12\n13,14,15,16\n17,18,19,20\n");
  const auto msg = error_of([&] { load_dataset(tmp.path()); });
  EXPECT_NE(msg.find("data.csv"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
}

TEST(Dataset, RejectsBadBundles) {
  oracle::TempDir tmp;
  write_dataset(tiny(), tmp.path());
  const auto good_labels = [&] {
    std::ifstream in(tmp / "labels.csv");
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();

  write_text(tmp / "labels.csv", "sample_id,run_id,class_id\n0,0,0\n1,0,1\n2,0,0\n3,1,1\n4,1,7\n");
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
  write_text(tmp / "labels.csv", "sample_id,run_id,class_id\n0,0,0\n1,0,x\n2,0,0\n3,1,1\n4,1,1\n");
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
  write_text(tmp / "labels.csv", good_labels);

  write_text(tmp / "coords.csv", "voxel_id,x,y,z\n0,0,0,0\n1,1,0,0\n2,1,0,0\n3,0,0,1\n");
  const auto msg = error_of([&] { load_dataset(tmp.path()); });
  EXPECT_NE(msg.find("coords.csv"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;

  write_text(tmp / "coords.csv", "voxel_id,x,y,z\n0,0,0,0\n1,1,0,0\n2,0,1,0\n3,0,0,nan\n");
  EXPECT_THROW(load_dataset(tmp.path()), DataError);

  std::filesystem::remove(tmp / "manifest.json");
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
}

TEST(Dataset, ShiftLabelsZeroIsIdentity) {
  EXPECT_TRUE(shift_labels(tiny(), 0) == tiny());
}

TEST(Dataset, ShiftLabelsSingleRun) {
  Dataset d = tiny();
  d.run_ids.assign(5, 0);
  d.labels = {0, 1, 2, 3, 4};
  d.class_names = {"a", "b", "c", "d", "e"};
  const auto s = shift_labels(d, 3);
  ASSERT_EQ(s.n_samples(), 2u);
  EXPECT_EQ(s.intensities.row(0), d.intensities.row(3));
  EXPECT_EQ(s.intensities.row(1), d.intensities.row(4));
  EXPECT_EQ(s.labels, (std::vector<int>{0, 1}));
}

TEST(Dataset, ShiftLabelsIsPerRun) {
  SynthConfig cfg;
  cfg.gx = cfg.gy = cfg.gz = 3;
  cfg.n_classes = 3;
  cfg.trials_per_run = 9;
  const auto d = generate_synthetic(cfg);
  const auto s = shift_labels(d, 3);
  for (int r : d.runs())
    EXPECT_EQ(std::count(s.run_ids.begin(), s.run_ids.end(), r), std::count(d.run_ids.begin(), d.run_ids.end(), r) - 3);
  EXPECT_THROW(shift_labels(d, 9), ArgumentError);
}

TEST(Dataset, SplitByRunCounts) {
  SynthConfig cfg;
  cfg.gx = cfg.gy = cfg.gz = 3;
  const auto d = generate_synthetic(cfg);
  const auto [train, test] = split_by_run(d, 3);
  EXPECT_EQ(train.n_samples(), 210u);
  EXPECT_EQ(test.n_samples(), 30u);
  EXPECT_THROW(split_by_run(d, 42), ArgumentError);
}

TEST(Dataset, SplitsPartitionSamples) {
  const auto d = oracle::random_dataset(3, 5, 6, 7, 2);
  for (int r : d.runs()) {
    const auto s = split_indices_by_run(d.run_ids, r);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(d.n_samples());
    std::iota(expected.begin(), expected.end(), 0u);
    EXPECT_EQ(all, expected);
    for (auto i : s.test) EXPECT_EQ(d.run_ids[i], r);
    for (auto i : s.train) EXPECT_NE(d.run_ids[i], r);
  }
}

// ---------------------------------------------------------------------------
// neighborhoods

TEST(Neighborhood, LineTieGoesToSmallerIndex) {
  const std::vector<Coord> line = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  const auto t = build_neighborhood_table(line, 2);
  EXPECT_EQ(std::vector<std::size_t>(t.row(1).begin(), t.row(1).end()), (std::vector<std::size_t>{0, 2}));
  EXPECT_DOUBLE_EQ(t.distance(1, 0), 1.0);
}

TEST(Neighborhood, CubeCorner) {
  const auto coords = synth::grid_coords(2, 2, 2);
  const auto t = build_neighborhood_table(coords, 3);
  // grid order is x slowest: (0,0,1)=1, (0,1,0)=2, (1,0,0)=4
  EXPECT_EQ(std::vector<std::size_t>(t.row(0).begin(), t.row(0).end()), (std::vector<std::size_t>{1, 2, 4}));
}

TEST(Neighborhood, MatchesBruteForceIncludingTies) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + rng() % 300;
    const std::size_t p = 1 + rng() % 8;
    // A coarse lattice forces many exact distance ties.
    std::uniform_int_distribution<int> pos(0, 7);
    std::set<std::tuple<int, int, int>> used;
    std::vector<Coord> coords;
    while (coords.size() < n && used.size() < 512) {
      std::tuple<int, int, int> c{pos(rng), pos(rng), pos(rng)};
      if (used.insert(c).second) coords.push_back({double(std::get<0>(c)), double(std::get<1>(c)), double(std::get<2>(c))});
    }
    const auto table = build_neighborhood_table(coords, p);
    const auto expected = oracle::brute_neighbors(coords, p);
    for (std::size_t j = 0; j < coords.size(); ++j)
      ASSERT_EQ(std::vector<std::size_t>(table.row(j).begin(), table.row(j).end()), expected[j]) << "voxel " << j;
  }
}

TEST(Neighborhood, RejectsBadOrder) {
  const auto coords = synth::grid_coords(2, 1, 1);
  EXPECT_THROW(build_neighborhood_table(coords, 0), ArgumentError);
  EXPECT_THROW(build_neighborhood_table(coords, 2), ArgumentError);
}

TEST(Neighborhood, CsvHasOneRowPerRank) {
  oracle::TempDir tmp;
  const auto t = build_neighborhood_table(synth::grid_coords(2, 2, 2), 3);
  write_neighbors_csv(t, tmp / "neighbors.csv");
  std::ifstream in(tmp / "neighbors.csv");
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "voxel_id,rank,neighbor_id,distance");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 8u * 3u);
}

// ---------------------------------------------------------------------------
// arc weights

TEST(ArcWeights, WorkedExamples) {
  MeshConfig cfg;
  {
    const std::vector<double> c{10};
    Matrix x(1, 2);
    x << 3, 4;
    const auto e = estimate_arc_weights(c, x, cfg);
    EXPECT_NEAR(e.weights[0], 1.2, 1e-15);
    EXPECT_NEAR(e.weights[1], 1.6, 1e-15);
    EXPECT_EQ(e.residual, 0.0);
  }
  {
    const std::vector<double> c{5};
    const Matrix x = Matrix::Zero(1, 3);
    const auto e = estimate_arc_weights(c, x, cfg);
    EXPECT_EQ(e.weights, (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(e.residual, 5.0);
  }
  {
    const std::vector<double> c{6};
    Matrix x(1, 1);
    x << 2;
    EXPECT_EQ(estimate_arc_weights(c, x, cfg).weights[0], 3.0);
  }
  {
    const std::vector<double> c{1, 2, 3};
    Matrix x(3, 1);
    x << 1, 2, 3;
    const auto e = estimate_arc_weights(c, x, cfg);
    EXPECT_NEAR(e.weights[0], 1.0, 1e-14);
    EXPECT_NEAR(e.residual, 0.0, 1e-14);
  }
}

TEST(ArcWeights, MatchPseudoinverseOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (std::size_t window : {1u, 2u, 4u, 12u}) {
    MeshConfig cfg;
    cfg.window = window;
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = static_cast<Index>(1 + rng() % 10);
      Matrix x(static_cast<Index>(window), p);
      Vector c(static_cast<Index>(window));
      for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
      for (Index i = 0; i < c.size(); ++i) c(i) = normal(rng);
      if (trial % 10 == 0 && p > 1) x.col(1) = x.col(0);  // rank deficient
      const auto e = estimate_arc_weights(std::span<const double>(c.data(), c.size()), x, cfg);
      const Vector expected = oracle::pinv_solve(x, c);
      for (Index k = 0; k < p; ++k) ASSERT_NEAR(e.weights[static_cast<std::size_t>(k)], expected(k), 1e-9);
      const double rms = (x * expected - c).norm() / std::sqrt(double(window));
      ASSERT_NEAR(e.residual, rms, 1e-9);
    }
  }
}

TEST(ArcWeights, RidgeMatchesNormalEquations) {
  MeshConfig cfg;
  cfg.estimator = Estimator::Ridge;
  cfg.ridge_lambda = 0.5;
  cfg.window = 5;
  Matrix x(5, 3);
  x << 1, 2, 0, 0, 1, 1, 3, 0, 2, 1, 1, 1, 0, 2, 5;
  Vector c(5);
  c << 1, -1, 2, 0, 3;
  const auto e = estimate_arc_weights(std::span<const double>(c.data(), 5), x, cfg);
  const Vector expected = (x.transpose() * x + 0.5 * Eigen::MatrixXd::Identity(3, 3)).inverse() * x.transpose() * c;
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(e.weights[static_cast<std::size_t>(k)], expected(k), 1e-12);
}

TEST(ArcWeights, ConfigValidation) {
  MeshConfig cfg;
  cfg.estimator = Estimator::Ridge;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg.ridge_lambda = 1.0;
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  EXPECT_THROW(parse_estimator("lasso"), ArgumentError);
}

// ---------------------------------------------------------------------------
// MAD extraction

TEST(Mad, ShapeAndLayout) {
  const auto d = tiny();
  MeshConfig cfg;
  cfg.p = 2;
  const auto table = build_neighborhood_table(d.coords, 2);
  const auto mad = extract_mad(d, table, cfg);
  EXPECT_EQ(mad.values.rows(), 5);
  EXPECT_EQ(mad.values.cols(), 8);
  // Column j*p + k is voxel j's weight on its k-th neighbor.
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      Matrix x(1, 2);
      x << d.intensities(Index(i), Index(table.row(j)[0])), d.intensities(Index(i), Index(table.row(j)[1]));
      const std::vector<double> c{d.intensities(Index(i), Index(j))};
      const auto e = estimate_arc_weights(c, x, cfg);
      EXPECT_EQ(mad.values(Index(i), Index(j * 2)), e.weights[0]);
      EXPECT_EQ(mad.values(Index(i), Index(j * 2 + 1)), e.weights[1]);
    }
}

TEST(Mad, HalfValuedNeighborGivesTwo) {
  // Voxels on a line with shrinking gaps, so each voxel's nearest neighbor is
  // its successor; intensity 2^-k makes that neighbor carry half the value.
  Dataset d;
  double x = 0.0;
  for (int k = 0; k < 6; ++k) {
    d.coords.push_back({x, 0, 0});
    x += 2.0 - 0.1 * k;
  }
  d.intensities = Matrix(3, 6);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 6; ++j) d.intensities(i, j) = (i + 1) * std::pow(0.5, double(j));
  d.labels = {0, 1, 0};
  d.run_ids = {0, 0, 0};
  d.class_names = {"a", "b"};
  MeshConfig cfg;
  cfg.p = 1;
  const auto mad = extract_mad(d, build_neighborhood_table(d.coords, 1), cfg);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(mad.values(i, j), 2.0);
}

TEST(Mad, WindowPoolsWithinRuns) {
  auto d = oracle::random_dataset(1, 10, 2, 5, 2);
  MeshConfig cfg;
  cfg.p = 3;
  cfg.window = 2;
  const auto mad = extract_mad(d, build_neighborhood_table(d.coords, 3), cfg);
  EXPECT_EQ(mad.values.rows(), 4);  // two full windows per 5-sample run
  EXPECT_EQ(mad.source_rows, (std::vector<std::size_t>{0, 2, 5, 7}));
}

TEST(Mad, FeaturesForP0IsRaw) {
  const auto d = oracle::random_dataset(2, 12, 2, 4, 2);
  MeshConfig cfg;
  cfg.p = 0;
  EXPECT_EQ(features_for(FeatureMode::Mad, d, cfg).values, d.intensities);
  cfg.p = 1;
  EXPECT_EQ(features_for(FeatureMode::Mad, d, cfg).values.cols(), 12);
}

TEST(Mad, BinaryRoundTripIsBitIdentical) {
  const auto d = oracle::random_dataset(4, 15, 2, 6, 3);
  MeshConfig cfg;
  cfg.p = 4;
  const auto mad = extract_mad(d, build_neighborhood_table(d.coords, 4), cfg);
  oracle::TempDir tmp;
  write_mad_bin(mad, tmp / "mad.bin", {{"note", "x"}});
  const auto back = read_mad_bin(tmp / "mad.bin");
  ASSERT_EQ(back.values.rows(), mad.values.rows());
  ASSERT_EQ(back.values.cols(), mad.values.cols());
  EXPECT_EQ(std::memcmp(back.values.data(), mad.values.data(), sizeof(double) * std::size_t(mad.values.size())), 0);
  EXPECT_EQ(back.header["p"], 4);
  EXPECT_EQ(back.header["note"], "x");

  // Truncation and trailing bytes are detected.
  const auto size = std::filesystem::file_size(tmp / "mad.bin");
  std::filesystem::resize_file(tmp / "mad.bin", size - 1);
  EXPECT_THROW(read_mad_bin(tmp / "mad.bin"), DataError);
  write_mad_bin(mad, tmp / "mad.bin");
  std::ofstream(tmp / "mad.bin", std::ios::app | std::ios::binary) << 'x';
  EXPECT_THROW(read_mad_bin(tmp / "mad.bin"), DataError);
}

// ---------------------------------------------------------------------------
// synthetic generator

TEST(Synth, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.gx = cfg.gy = cfg.gz = 4;
  cfg.seed = 77;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  EXPECT_TRUE(a == b);
  cfg.seed = 78;
  EXPECT_FALSE(generate_synthetic(cfg) == a);
}

TEST(Synth, BenchmarkShape) {
  const auto d = generate_synthetic(SynthConfig{});
  EXPECT_EQ(d.n_voxels(), 216u);
  EXPECT_EQ(d.n_samples(), 240u);
  EXPECT_EQ(d.n_classes(), 10u);
  EXPECT_EQ(d.runs().size(), 8u);
  EXPECT_NO_THROW(validate(d));
  // Round-robin labels: every class three times per run.
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 10; ++c) {
      int n = 0;
      for (std::size_t i = 0; i < d.n_samples(); ++i) n += d.run_ids[i] == r && d.labels[i] == c;
      EXPECT_EQ(n, 3);
    }
}

TEST(Synth, MarginalsMatchAcrossClasses) {
  SynthConfig cfg;
  cfg.trials_per_run = 250;  // 2000 samples
  const auto d = generate_synthetic(cfg);
  ASSERT_GE(d.n_samples(), 2000u);
  for (Index j = 0; j < Index(d.n_voxels()); ++j) {
    double lo_mean = INFINITY, hi_mean = -INFINITY, lo_var = INFINITY, hi_var = -INFINITY;
    for (int c = 0; c < 10; ++c) {
      double s = 0, s2 = 0, n = 0;
      for (std::size_t i = 0; i < d.n_samples(); ++i)
        if (d.labels[i] == c) {
          const double v = d.intensities(Index(i), j);
          s += v, s2 += v * v, n += 1;
        }
      const double mean = s / n, var = s2 / n - mean * mean;
      lo_mean = std::min(lo_mean, mean), hi_mean = std::max(hi_mean, mean);
      lo_var = std::min(lo_var, var), hi_var = std::max(hi_var, var);
    }
    ASSERT_LT(hi_mean - lo_mean, 0.05);
    ASSERT_LT(hi_var - lo_var, 0.1);
  }
}

TEST(Synth, ConfigParsingAndValidation) {
  const auto cfg = synth_config_from_json(nlohmann::json::parse(R"({"grid":[3,4,5],"n_classes":3,"seed":9})"));
  EXPECT_EQ(cfg.n_voxels(), 60u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(synth_config_from_json(to_json(cfg)).n_voxels(), 60u);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"colour":1})")), DataError);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"grid":[1,1,2],"p_gen":6})")), ArgumentError);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"n_classes":1})")), ArgumentError);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"n_runs":1})")), ArgumentError);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"noise_sigma":-1})")), ArgumentError);
}

TEST(Synth, SmoothingPreservesConstantsAndMass) {
  std::vector<double> flat(60, 2.5);
  for (double v : synth::smooth(flat, 3, 4, 5, 1.3)) EXPECT_NEAR(v, 2.5, 1e-12);
  std::vector<double> field(60, 0.0);
  field[27] = 1.0;
  const auto s = synth::smooth(field, 3, 4, 5, 0.0);
  EXPECT_EQ(s, field);
}
