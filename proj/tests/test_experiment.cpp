#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fnn/experiment.hpp"

using namespace fnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("fnn_experiment_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  std::istringstream text(R"(
# small enough for a unit test
experiment = sim2
data.n_samples = 60
data.n_timepoints = 64
run.trials = 2
run.seed = 7
model.filters = 3
model.filter_len = 9
train.epochs = 1
knn.k_max = 5
)");
  apply_config_text(c, text);
  c.out_dir = out.string();
  return c;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TEST(Config, ParsesKeysAndComments) {
  const auto c = tiny("x");
  EXPECT_EQ(c.experiment, ExperimentKind::sim2);
  EXPECT_EQ(c.n_samples, 60u);
  EXPECT_EQ(c.arch.filters, std::vector<std::size_t>{3});
  EXPECT_EQ(c.arch.filter_len, 9u);
  EXPECT_EQ(c.knn_k_max, 5u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ErrorsNameTheField) {
  ExperimentConfig c;
  EXPECT_EQ(field_of([&] { set_config_value(c, "data.n_samples", "many"); }), "data.n_samples");
  EXPECT_EQ(field_of([&] { set_config_value(c, "data.colour", "red"); }), "data.colour");
  EXPECT_EQ(field_of([&] { set_config_value(c, "model.head", "both"); }), "model.head");
  EXPECT_EQ(field_of([&] {
              std::istringstream in("run.trials 3\n");
              apply_config_text(c, in);
            }),
            "run.trials 3");
  auto bad = [](const std::string& key, const std::string& value) {
    ExperimentConfig b;
    set_config_value(b, key, value);
    return field_of([&] { b.validate(); });
  };
  EXPECT_EQ(bad("model.filter_len", "24"), "model.filter_len");
  EXPECT_EQ(bad("run.trials", "0"), "run.trials");
  EXPECT_EQ(bad("data.train_fraction", "1"), "data.train_fraction");
  EXPECT_EQ(bad("model.head", "functional"), "model.head");
  EXPECT_EQ(bad("knn.k_min", "30"), "knn.k_min");
  EXPECT_EQ(bad("lle.bandwidths", "5"), "lle.bandwidths");
}

TEST(Config, DefaultsMatchTheReferenceSetup) {
  const ExperimentConfig c;
  EXPECT_EQ(c.n_timepoints, 250u);
  EXPECT_EQ(c.arch.filters, (std::vector<std::size_t>{20, 10}));
  EXPECT_EQ(c.arch.filter_len, 25u);
  EXPECT_EQ(c.arch.basis.count, 5u);
  EXPECT_EQ(c.arch.lle.bandwidths, (std::vector<int>{5, 10}));
  EXPECT_EQ(c.arch.hidden, Activation::elu);
  EXPECT_EQ(c.train.epochs, 5u);
  EXPECT_EQ(c.train.batch_size, 32u);
}

TEST(Config, ManifestReloadsToSameConfig) {
  auto c = tiny("x");
  c.train.learning_rate = 0.0125;
  c.arch.lle.bandwidths = {4, 9};
  std::istringstream in(manifest_text(c));
  ExperimentConfig back;
  apply_config_text(back, in);
  EXPECT_EQ(canonical_config(back), canonical_config(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, OutputDirAndWorkersAreNotRecorded) {
  auto a = tiny("one"), b = tiny("two");
  b.workers = 4;
  EXPECT_EQ(manifest_text(a), manifest_text(b));
  b.seed = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, EveryFieldRoundTrips) {
  const ExperimentConfig c;
  for (const auto& f : config_fields()) {
    ExperimentConfig d;
    set_config_value(d, f.key, f.get(c));
    EXPECT_EQ(f.get(d), f.get(c)) << f.key;
  }
}

class Simulation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("sim"));
    result_ = new SimulationResult(run_simulation(tiny(*dir_)));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete dir_;
  }
  static fs::path* dir_;
  static SimulationResult* result_;
};
fs::path* Simulation::dir_ = nullptr;
SimulationResult* Simulation::result_ = nullptr;

TEST_F(Simulation, WritesEveryFile) {
  for (const char* f : {"results.csv", "knn_sweep.csv", "trials.csv", "history.csv", "confusion.csv", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(*dir_ / f)) << f;
  }
  EXPECT_EQ(slurp(*dir_ / "results.csv").substr(0, 34), "method,k_or_model,mean_acc,std_acc");
  EXPECT_EQ(csv(*dir_ / "knn_sweep.csv").size(), 5u);
  EXPECT_EQ(csv(*dir_ / "confusion.csv").size(), 9u);
  EXPECT_EQ(csv(*dir_ / "history.csv").size(), 2u * 2u);
}

TEST_F(Simulation, AggregatesEqualMeanOfTrialRows) {
  const auto trials = csv(*dir_ / "trials.csv");
  double fnn = 0.0;
  std::vector<double> knn(5, 0.0);
  for (const auto& row : trials) {
    if (row[2] == "fnn") fnn += std::stod(row[4]) / 2.0;
    if (row[2] == "knn") knn[std::stoul(row[3]) - 1] += std::stod(row[4]) / 2.0;
  }
  const auto results = csv(*dir_ / "results.csv");
  EXPECT_NEAR(std::stod(results[0][2]), fnn, 1e-12);
  EXPECT_EQ(results[2][0], "knn");
  const std::size_t best = std::stoul(results[2][1]);
  EXPECT_NEAR(std::stod(results[2][2]), knn[best - 1], 1e-12);
  for (double v : knn) EXPECT_LE(v, knn[best - 1]);
  const auto sweep = csv(*dir_ / "knn_sweep.csv");
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(std::stod(sweep[k][1]), knn[k], 1e-12);
  EXPECT_EQ(result_->confusion.total(), 2u * 12u);
}

TEST_F(Simulation, ConfusionPercentagesAreRowNormalised) {
  double row_total[4] = {};
  for (const auto& r : csv(*dir_ / "confusion.csv")) row_total[std::stoi(r[0])] += std::stod(r[3]);
  for (int t = 1; t <= 3; ++t) {
    if (result_->confusion.row_sum(t)) {
      EXPECT_NEAR(row_total[t], 100.0, 1e-9);
    }
  }
}

TEST_F(Simulation, RerunIsByteIdentical) {
  const auto again = scratch("sim_again");
  run_simulation(tiny(again));
  for (const auto& e : fs::directory_iterator(*dir_)) {
    EXPECT_EQ(slurp(e.path()), slurp(again / e.path().filename())) << e.path().filename();
  }
}

TEST_F(Simulation, ManifestReproducesOutputs) {
  const auto again = scratch("sim_manifest");
  auto c = load_config_file((*dir_ / "manifest.txt").string());
  c.out_dir = again.string();
  c.workers = 2;
  run_simulation(c);
  for (const auto& e : fs::directory_iterator(*dir_)) {
    EXPECT_EQ(slurp(e.path()), slurp(again / e.path().filename())) << e.path().filename();
  }
}

TEST(Stream, SyntheticRecordingEndToEnd) {
  StreamConfig sc;
  sc.length = 3000;
  sc.seed = 2;
  const auto rec = to_recording(gen_labeled_stream(sc));
  for (HeadKind head : {HeadKind::scalar, HeadKind::functional}) {
    ExperimentConfig c;
    c.experiment = ExperimentKind::stream;
    c.head = head;
    c.arch.filters = {3};
    c.arch.filter_len = 9;
    c.train.epochs = 1;
    c.max_windows = 30;
    c.out_dir = scratch(to_string(head)).string();
    const auto r = run_stream(c, rec);
    EXPECT_EQ(r.window_len, 250u);
    EXPECT_EQ(r.step, 4u);
    EXPECT_EQ(r.train_windows, count_windows(2400, 250, 4));
    EXPECT_EQ(r.test_windows, count_windows(600, 250, 4));
    EXPECT_EQ(r.confusion.total(), head == HeadKind::scalar ? 30u : 30u * 250u);
    for (const char* f : {"metrics.csv", "confusion.csv", "history.csv", "predictions.csv", "manifest.txt"}) {
      EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / f)) << f;
    }
    if (head == HeadKind::functional) {
      for (const auto& row : csv(fs::path(c.out_dir) / "predictions.csv")) {
        EXPECT_NEAR(std::stod(row[5]) + std::stod(row[6]) + std::stod(row[7]), 1.0, 1e-12);
      }
    }
  }
}

TEST(Stream, MissingLabelColumnIsRejected) {
  Recording rec;
  rec.channel_names = {"a"};
  rec.channels = {std::vector<double>(600, 0.5)};
  for (int i = 0; i < 600; ++i) rec.time.push_back(i / 250.0);
  ExperimentConfig c;
  c.experiment = ExperimentKind::stream;
  EXPECT_THROW(run_stream(c, rec), ParseError);
}

TEST(Stream, LongRecordingWindowCount) {
  // 45 minutes at 250 Hz, 1 s windows, 0.016 s = 4 sample steps.
  EXPECT_GT(count_windows(45 * 60 * 250, 250, 4), 125000u);
}

TEST(GradCheck, SmallModelsPass) {
  ExperimentConfig c;
  c.arch.filters = {3};
  c.arch.filter_len = 9;
  for (const auto& r : run_gradcheck(c, 1, 48)) {
    EXPECT_TRUE(r.report.passed) << r.name << " " << r.report.max_rel_error;
  }
}

TEST(Export, WritesDatasetAndCurves) {
  auto c = tiny(scratch("export"));
  export_data(c);
  const auto rec = read_recording_file((fs::path(c.out_dir) / "dataset.csv").string());
  EXPECT_EQ(rec.length(), 60u * 64u);
  EXPECT_TRUE(rec.has_labels());
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "sample_curves.csv"));
  c.experiment = ExperimentKind::stream;
  c.fixture_length = 800;
  c.out_dir = scratch("export_stream").string();
  export_data(c);
  EXPECT_EQ(read_recording_file((fs::path(c.out_dir) / "stream.csv").string()).length(), 800u);
}

}  // namespace
