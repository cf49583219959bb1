// Experiment runner: flat key=value configuration, the simulation study,
// the sliding-window stream pipeline, gradient checks and data export.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fnn/baseline.hpp"
#include "fnn/datagen.hpp"
#include "fnn/engine.hpp"
#include "fnn/eval.hpp"
#include "fnn/io.hpp"
#include "fnn/model.hpp"

namespace fnn {

inline constexpr const char* version = "0.1.0";

enum class ExperimentKind { sim1, sim2, stream };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::sim1: return "sim1";
    case ExperimentKind::sim2: return "sim2";
    case ExperimentKind::stream: return "stream";
  }
  return "?";
}

inline ExperimentKind experiment_from_string(const std::string& s) {
  if (s == "sim1") return ExperimentKind::sim1;
  if (s == "sim2") return ExperimentKind::sim2;
  if (s == "stream") return ExperimentKind::stream;
  throw Error("unknown experiment '" + s + "' (sim1, sim2, stream)");
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::sim2;

  std::size_t n_samples = 1000;
  std::size_t n_timepoints = 250;
  double noise_sd = 1.0;
  double train_fraction = 0.8;

  std::size_t trials = 10;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  ArchitectureSpec arch{};
  HeadKind head = HeadKind::scalar;
  TrainConfig train{};

  std::size_t knn_k_min = 1;
  std::size_t knn_k_max = 19;

  std::string stream_input;
  double window_seconds = 1.0;
  double step_seconds = 0.016;
  std::size_t max_windows = 0;  // 0 keeps every window
  std::size_t prediction_windows = 5;
  double interior_fraction = 0.1;
  std::size_t fixture_length = 20000;
  double fixture_noise_sd = 0.3;

  std::string out_dir = "out";

  void validate() const;
};

// --- key registry --------------------------------------------------------------

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  auto v = parse_number<T>(trim(text));
  if (!v) throw ConfigError(key, "cannot parse '" + text + "'");
  return *v;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  for (auto part : split(text, ',')) out.push_back(parse_value<T>(key, std::string(part)));
  return out;
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace detail

/// One configuration key. `recorded` keys make up the manifest and the
/// config hash; the output directory and worker count do not change results.
struct ConfigField {
  std::string key;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  bool recorded = true;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  using detail::parse_value;
  using S = std::string;
  static const std::vector<ConfigField> fields = {
      {"experiment", "sim1, sim2 or stream", [](const C& c) { return to_string(c.experiment); },
       [](C& c, const S& v) { c.experiment = detail::wrap("experiment", [&] { return experiment_from_string(v); }); }},
      {"data.n_samples", "samples per simulated data set",
       [](const C& c) { return std::to_string(c.n_samples); },
       [](C& c, const S& v) { c.n_samples = parse_value<std::size_t>("data.n_samples", v); }},
      {"data.n_timepoints", "grid length T of simulated curves",
       [](const C& c) { return std::to_string(c.n_timepoints); },
       [](C& c, const S& v) { c.n_timepoints = parse_value<std::size_t>("data.n_timepoints", v); }},
      {"data.noise_sd", "noise standard deviation of simulated curves",
       [](const C& c) { return format_double(c.noise_sd); },
       [](C& c, const S& v) { c.noise_sd = parse_value<double>("data.noise_sd", v); }},
      {"data.train_fraction", "leading fraction used for training",
       [](const C& c) { return format_double(c.train_fraction); },
       [](C& c, const S& v) { c.train_fraction = parse_value<double>("data.train_fraction", v); }},
      {"run.trials", "independent repetitions", [](const C& c) { return std::to_string(c.trials); },
       [](C& c, const S& v) { c.trials = parse_value<std::size_t>("run.trials", v); }},
      {"run.seed", "master seed; trial i uses seed + i", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, const S& v) { c.seed = parse_value<std::uint64_t>("run.seed", v); }},
      {"run.workers", "trials run concurrently", [](const C& c) { return std::to_string(c.workers); },
       [](C& c, const S& v) { c.workers = parse_value<std::size_t>("run.workers", v); }, false},
      {"model.head", "scalar or functional", [](const C& c) { return to_string(c.head); },
       [](C& c, const S& v) { c.head = detail::wrap("model.head", [&] { return head_kind_from_string(v); }); }},
      {"model.filters", "filters per convolutional layer, comma separated",
       [](const C& c) { return detail::join_sizes(c.arch.filters); },
       [](C& c, const S& v) { c.arch.filters = detail::parse_list<std::size_t>("model.filters", v); }},
      {"model.filter_len", "filter length in samples (odd)",
       [](const C& c) { return std::to_string(c.arch.filter_len); },
       [](C& c, const S& v) { c.arch.filter_len = parse_value<std::size_t>("model.filter_len", v); }},
      {"model.basis", "legendre or fourier", [](const C& c) { return to_string(c.arch.basis.family); },
       [](C& c, const S& v) {
         c.arch.basis.family = detail::wrap("model.basis", [&] { return basis_family_from_string(v); });
       }},
      {"model.basis_count", "basis functions per weight function",
       [](const C& c) { return std::to_string(c.arch.basis.count); },
       [](C& c, const S& v) { c.arch.basis.count = parse_value<std::size_t>("model.basis_count", v); }},
      {"model.activation", "hidden activation: elu or identity",
       [](const C& c) { return to_string(c.arch.hidden); },
       [](C& c, const S& v) { c.arch.hidden = detail::wrap("model.activation", [&] { return activation_from_string(v); }); }},
      {"lle.degree", "local polynomial degree", [](const C& c) { return std::to_string(c.arch.lle.degree); },
       [](C& c, const S& v) { c.arch.lle.degree = parse_value<int>("lle.degree", v); }},
      {"lle.orders", "highest derivative order fed to the network",
       [](const C& c) { return std::to_string(c.arch.lle.derivative_orders); },
       [](C& c, const S& v) { c.arch.lle.derivative_orders = parse_value<int>("lle.orders", v); }},
      {"lle.bandwidths", "bandwidth in samples per derivative order, comma separated",
       [](const C& c) { return detail::join_ints(c.arch.lle.bandwidths); },
       [](C& c, const S& v) { c.arch.lle.bandwidths = detail::parse_list<int>("lle.bandwidths", v); }},
      {"train.epochs", "passes over the training set", [](const C& c) { return std::to_string(c.train.epochs); },
       [](C& c, const S& v) { c.train.epochs = parse_value<std::size_t>("train.epochs", v); }},
      {"train.batch_size", "mini-batch size", [](const C& c) { return std::to_string(c.train.batch_size); },
       [](C& c, const S& v) { c.train.batch_size = parse_value<std::size_t>("train.batch_size", v); }},
      {"train.optimizer", "adam or sgd", [](const C& c) { return to_string(c.train.optimizer); },
       [](C& c, const S& v) {
         c.train.optimizer = detail::wrap("train.optimizer", [&] { return optimizer_from_string(v); });
       }},
      {"train.learning_rate", "step size relative to each block's natural scale",
       [](const C& c) { return format_double(c.train.learning_rate); },
       [](C& c, const S& v) { c.train.learning_rate = parse_value<double>("train.learning_rate", v); }},
      {"train.beta1", "Adam first-moment decay", [](const C& c) { return format_double(c.train.beta1); },
       [](C& c, const S& v) { c.train.beta1 = parse_value<double>("train.beta1", v); }},
      {"train.beta2", "Adam second-moment decay", [](const C& c) { return format_double(c.train.beta2); },
       [](C& c, const S& v) { c.train.beta2 = parse_value<double>("train.beta2", v); }},
      {"train.epsilon", "Adam denominator guard", [](const C& c) { return format_double(c.train.epsilon); },
       [](C& c, const S& v) { c.train.epsilon = parse_value<double>("train.epsilon", v); }},
      {"knn.k_min", "smallest k of the sweep", [](const C& c) { return std::to_string(c.knn_k_min); },
       [](C& c, const S& v) { c.knn_k_min = parse_value<std::size_t>("knn.k_min", v); }},
      {"knn.k_max", "largest k of the sweep", [](const C& c) { return std::to_string(c.knn_k_max); },
       [](C& c, const S& v) { c.knn_k_max = parse_value<std::size_t>("knn.k_max", v); }},
      {"stream.input", "recording CSV (time,ch1,...,chd,label)", [](const C& c) { return c.stream_input; },
       [](C& c, const S& v) { c.stream_input = v; }},
      {"stream.window_seconds", "window length in seconds",
       [](const C& c) { return format_double(c.window_seconds); },
       [](C& c, const S& v) { c.window_seconds = parse_value<double>("stream.window_seconds", v); }},
      {"stream.step_seconds", "window step in seconds", [](const C& c) { return format_double(c.step_seconds); },
       [](C& c, const S& v) { c.step_seconds = parse_value<double>("stream.step_seconds", v); }},
      {"stream.max_windows", "cap on windows per split, evenly thinned; 0 keeps all",
       [](const C& c) { return std::to_string(c.max_windows); },
       [](C& c, const S& v) { c.max_windows = parse_value<std::size_t>("stream.max_windows", v); }},
      {"stream.prediction_windows", "test windows with a label change written to predictions.csv",
       [](const C& c) { return std::to_string(c.prediction_windows); },
       [](C& c, const S& v) { c.prediction_windows = parse_value<std::size_t>("stream.prediction_windows", v); }},
      {"stream.interior_fraction", "margin around label changes and window edges, as a fraction of the window",
       [](const C& c) { return format_double(c.interior_fraction); },
       [](C& c, const S& v) { c.interior_fraction = parse_value<double>("stream.interior_fraction", v); }},
      {"stream.fixture_length", "samples in the exported synthetic stream",
       [](const C& c) { return std::to_string(c.fixture_length); },
       [](C& c, const S& v) { c.fixture_length = parse_value<std::size_t>("stream.fixture_length", v); }},
      {"stream.fixture_noise_sd", "noise of the exported synthetic stream",
       [](const C& c) { return format_double(c.fixture_noise_sd); },
       [](C& c, const S& v) { c.fixture_noise_sd = parse_value<double>("stream.fixture_noise_sd", v); }},
      {"io.out", "output directory", [](const C& c) { return c.out_dir; },
       [](C& c, const S& v) { c.out_dir = v; }, false},
  };
  return fields;
}

inline const ConfigField* find_field(const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return &f;
  return nullptr;
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigField* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown key");
  f->set(cfg, value);
}

inline void ExperimentConfig::validate() const {
  auto need = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  need(n_samples >= 1, "data.n_samples", "must be at least 1");
  need(n_timepoints >= 2, "data.n_timepoints", "must be at least 2");
  need(noise_sd >= 0.0, "data.noise_sd", "must be non-negative");
  need(train_fraction > 0.0 && train_fraction < 1.0, "data.train_fraction", "must lie in (0, 1)");
  need(trials >= 1, "run.trials", "must be at least 1");
  need(workers >= 1, "run.workers", "must be at least 1");
  need(!arch.filters.empty(), "model.filters", "needs at least one convolutional layer");
  for (auto f : arch.filters) need(f >= 1, "model.filters", "filter counts must be positive");
  need(arch.filter_len % 2 == 1, "model.filter_len", "must be odd");
  detail::wrap("model.basis_count", [&] { arch.basis.validate(); });
  need(arch.hidden != Activation::softmax, "model.activation", "softmax is reserved for the head");
  detail::wrap("lle.bandwidths", [&] { arch.lle.validate(); });
  need(train.epochs >= 1, "train.epochs", "must be positive");
  need(train.batch_size >= 1, "train.batch_size", "must be positive");
  need(train.learning_rate >= 0.0, "train.learning_rate", "must be non-negative");
  need(train.beta1 >= 0.0 && train.beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
  need(train.beta2 >= 0.0 && train.beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
  need(train.epsilon > 0.0, "train.epsilon", "must be positive");
  need(knn_k_min >= 1 && knn_k_min <= knn_k_max, "knn.k_min", "must satisfy 1 <= k_min <= k_max");
  need(window_seconds > 0.0, "stream.window_seconds", "must be positive");
  need(step_seconds > 0.0, "stream.step_seconds", "must be positive");
  need(interior_fraction >= 0.0 && interior_fraction < 0.5, "stream.interior_fraction", "must lie in [0, 0.5)");
  need(fixture_length >= 2, "stream.fixture_length", "must be at least 2");
  need(fixture_noise_sd >= 0.0, "stream.fixture_noise_sd", "must be non-negative");
  if (experiment != ExperimentKind::stream) {
    need(head == HeadKind::scalar, "model.head", "simulated data carries scalar labels");
  }
}

/// Reads `key = value` lines; `#` starts a comment. `version` and
/// `config_hash` lines written into manifests are accepted and ignored.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    const std::string_view body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError(std::string(body), "expected key = value");
    const std::string key(detail::trim(body.substr(0, eq)));
    const std::string value(detail::trim(body.substr(eq + 1)));
    if (key == "version" || key == "config_hash") continue;
    set_config_value(cfg, key, value);
  }
}

inline ExperimentConfig load_config_file(const std::string& path, ExperimentConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  apply_config_text(cfg, in);
  return cfg;
}

/// Recorded keys, one `key = value` per line, in registry order.
inline std::string canonical_config(const ExperimentConfig& cfg) {
  std::string s;
  for (const auto& f : config_fields())
    if (f.recorded) s += f.key + " = " + f.get(cfg) + "\n";
  return s;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a(canonical_config(cfg));
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return s;
}

/// Loadable with load_config_file.
inline std::string manifest_text(const ExperimentConfig& cfg) {
  return "# fnn experiment manifest\nversion = " + std::string(version) + "\nconfig_hash = " +
         config_hash(cfg) + "\n" + canonical_config(cfg);
}

// --- shared helpers ------------------------------------------------------------------

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

inline std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for fewer than two values.
inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Runs job(i) for i in [0, n) on up to `workers` threads; the first
/// exception is rethrown after all threads finish.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string s = "true_class,predicted_class,count,percent\n";
  for (int t = 1; t <= cm.classes(); ++t) {
    const std::size_t row = cm.row_sum(t);
    for (int p = 1; p <= cm.classes(); ++p) {
      const double pct = row ? 100.0 * static_cast<double>(cm.at(t, p)) / static_cast<double>(row) : 0.0;
      s += std::to_string(t) + "," + std::to_string(p) + "," + std::to_string(cm.at(t, p)) + "," +
           format_double(pct) + "\n";
    }
  }
  return s;
}

inline std::string model_label(const ArchitectureSpec& a) {
  std::string s = "fnn";
  for (auto f : a.filters) s += "-" + std::to_string(f);
  return s;
}

}  // namespace detail

/// Rows of metrics.csv: metric,value.
inline std::string metrics_csv(const Metrics& m) {
  std::string s = "metric,value\n";
  s += "accuracy," + format_double(m.accuracy) + "\n";
  s += "macro_recall," + format_double(m.macro_recall) + "\n";
  s += "macro_precision," + format_double(m.macro_precision) + "\n";
  for (std::size_t c = 0; c < m.recall.size(); ++c) {
    s += "recall_" + std::to_string(c + 1) + "," + format_double(m.recall[c]) + "\n";
    s += "precision_" + std::to_string(c + 1) + "," + format_double(m.precision[c]) + "\n";
  }
  for (int c : m.recall_undefined) s += "recall_undefined," + std::to_string(c) + "\n";
  for (int c : m.precision_undefined) s += "precision_undefined," + std::to_string(c) + "\n";
  return s;
}

// --- simulation study ----------------------------------------------------------------------

struct TrialResult {
  std::uint64_t seed = 0;
  double fnn_train_accuracy = 0.0;
  double fnn_test_accuracy = 0.0;
  std::vector<double> knn_accuracy;  // one per k in the sweep
  std::vector<EpochRecord> history;
  ConfusionMatrix confusion{3};
};

struct SimulationResult {
  std::vector<std::size_t> k_values;
  std::vector<TrialResult> trials;
  std::vector<double> knn_mean, knn_std;  // per k
  std::size_t best_k = 0;
  double fnn_mean = 0.0, fnn_std = 0.0;
  double fnn_train_mean = 0.0, fnn_train_std = 0.0;
  double knn_best_mean = 0.0, knn_best_std = 0.0;
  ConfusionMatrix confusion{3};
};

/// Seeds of one trial: data, initialization and shuffling streams.
struct TrialSeeds {
  std::uint64_t data, init, shuffle;
};

inline TrialSeeds trial_seeds(std::uint64_t trial_seed) {
  return {derive_seed(trial_seed, 0), derive_seed(trial_seed, 1), derive_seed(trial_seed, 2)};
}

inline TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t trial_seed,
                             const std::vector<std::size_t>& k_values) {
  const TrialSeeds seeds = trial_seeds(trial_seed);
  SimConfig sc;
  sc.n_samples = cfg.n_samples;
  sc.n_timepoints = cfg.n_timepoints;
  sc.seed = seeds.data;
  sc.dataset = cfg.experiment == ExperimentKind::sim1 ? SimDataset::one : SimDataset::two;
  sc.noise_sd = cfg.noise_sd;
  const auto all = generate(sc);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(all.size())));
  if (n_train < 1 || n_train >= all.size()) throw ConfigError("data.n_samples", "too few samples to split");
  const std::vector<LabeledSample> train_set(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<LabeledSample> test_set(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());

  TrialResult r;
  r.seed = trial_seed;
  Model model = make_scalar_fnn(2, 3, cfg.arch);
  initialize_parameters(model, seeds.init, cfg.n_timepoints);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.shuffle;
  r.history = train(model, train_set, tc, &test_set);

  r.fnn_train_accuracy = evaluate(model, train_set).accuracy;
  const Evaluation ev = evaluate(model, test_set, true);
  r.fnn_test_accuracy = ev.accuracy;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    r.confusion.add(test_set[i].class_index(), predicted_class(std::get<std::vector<double>>(ev.predictions[i])));
  }
  if (k_values.back() > train_set.size()) throw ConfigError("knn.k_max", "exceeds the training set size");
  r.knn_accuracy = knn_sweep(train_set, test_set, k_values, cfg.arch.lle);
  return r;
}

inline SimulationResult simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment == ExperimentKind::stream) throw ConfigError("experiment", "not a simulation");
  SimulationResult res;
  for (std::size_t k = cfg.knn_k_min; k <= cfg.knn_k_max; ++k) res.k_values.push_back(k);
  res.trials.resize(cfg.trials);
  detail::parallel_for(cfg.trials, cfg.workers, [&](std::size_t i) {
    res.trials[i] = run_trial(cfg, cfg.seed + i, res.k_values);
  });

  std::vector<double> fnn, fnn_train;
  for (const auto& t : res.trials) {
    fnn.push_back(t.fnn_test_accuracy);
    fnn_train.push_back(t.fnn_train_accuracy);
    res.confusion += t.confusion;
  }
  res.fnn_mean = detail::mean_of(fnn);
  res.fnn_std = detail::std_of(fnn);
  res.fnn_train_mean = detail::mean_of(fnn_train);
  res.fnn_train_std = detail::std_of(fnn_train);
  for (std::size_t j = 0; j < res.k_values.size(); ++j) {
    std::vector<double> acc;
    for (const auto& t : res.trials) acc.push_back(t.knn_accuracy[j]);
    res.knn_mean.push_back(detail::mean_of(acc));
    res.knn_std.push_back(detail::std_of(acc));
    if (res.best_k == 0 || res.knn_mean[j] > res.knn_best_mean) {
      res.best_k = res.k_values[j];
      res.knn_best_mean = res.knn_mean[j];
      res.knn_best_std = res.knn_std[j];
    }
  }
  return res;
}

/// Writes results.csv, knn_sweep.csv, trials.csv, history.csv,
/// confusion.csv and manifest.txt into cfg.out_dir.
inline SimulationResult run_simulation(const ExperimentConfig& cfg) {
  SimulationResult res = simulate(cfg);
  const auto dir = detail::prepare_out(cfg);
  const std::string label = detail::model_label(cfg.arch);

  std::string results = "method,k_or_model,mean_acc,std_acc\n";
  results += "fnn," + label + "," + format_double(res.fnn_mean) + "," + format_double(res.fnn_std) + "\n";
  results += "fnn_train," + label + "," + format_double(res.fnn_train_mean) + "," +
             format_double(res.fnn_train_std) + "\n";
  results += "knn," + std::to_string(res.best_k) + "," + format_double(res.knn_best_mean) + "," +
             format_double(res.knn_best_std) + "\n";
  detail::write_file(dir / "results.csv", results);

  std::string sweep = "k,mean_accuracy,std_accuracy\n";
  for (std::size_t j = 0; j < res.k_values.size(); ++j) {
    sweep += std::to_string(res.k_values[j]) + "," + format_double(res.knn_mean[j]) + "," +
             format_double(res.knn_std[j]) + "\n";
  }
  detail::write_file(dir / "knn_sweep.csv", sweep);

  std::string trials = "trial,seed,method,k_or_model,accuracy\n";
  std::string history = "trial,epoch,split,loss,accuracy\n";
  for (std::size_t i = 0; i < res.trials.size(); ++i) {
    const auto& t = res.trials[i];
    const std::string head = std::to_string(i) + "," + std::to_string(t.seed) + ",";
    trials += head + "fnn," + label + "," + format_double(t.fnn_test_accuracy) + "\n";
    trials += head + "fnn_train," + label + "," + format_double(t.fnn_train_accuracy) + "\n";
    for (std::size_t j = 0; j < res.k_values.size(); ++j) {
      trials += head + "knn," + std::to_string(res.k_values[j]) + "," + format_double(t.knn_accuracy[j]) + "\n";
    }
    for (const auto& h : t.history) {
      history += std::to_string(i) + "," + std::to_string(h.epoch) + "," + h.split + "," +
                 format_double(h.loss) + "," + format_double(h.accuracy) + "\n";
    }
  }
  detail::write_file(dir / "trials.csv", trials);
  detail::write_file(dir / "history.csv", history);
  detail::write_file(dir / "confusion.csv", detail::confusion_csv(res.confusion));
  detail::write_file(dir / "manifest.txt", manifest_text(cfg));
  return res;
}

// --- sliding-window stream pipeline ----------------------------------------------------------

struct WindowSet {
  std::vector<LabeledSample> samples;
  std::vector<std::size_t> offsets;  // start index within the full recording
};

struct StreamResult {
  std::size_t window_len = 0;
  std::size_t step = 0;
  std::size_t train_windows = 0;  // before thinning
  std::size_t test_windows = 0;
  Metrics metrics;
  ConfusionMatrix confusion{1};
  double per_timepoint_accuracy = 0.0;  // functional head only
  double interior_accuracy = 0.0;       // functional head only
  std::vector<EpochRecord> history;
};

namespace detail {

inline std::size_t samples_for(double seconds, double rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

/// Every `stride`-th index so that at most `cap` remain; cap 0 keeps all.
inline std::vector<std::size_t> thin(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (cap == 0 || n <= cap) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t j = 0; j < cap; ++j) idx.push_back(j * n / cap);
  return idx;
}

inline WindowSet make_windows(const MultiCurve& data, std::span<const int> labels, std::size_t begin,
                              std::size_t end, std::size_t len, std::size_t step, HeadKind head,
                              int n_classes, std::size_t cap, std::size_t& total) {
  const MultiCurve part = extract_window(data, begin, end - begin);
  const auto offsets = window_offsets(part.length(), len, step);
  total = offsets.size();
  WindowSet ws;
  for (std::size_t j : thin(offsets.size(), cap)) {
    const std::size_t off = begin + offsets[j];
    LabeledSample s{extract_window(data, off, len), 0};
    if (head == HeadKind::scalar) s.label = majority_label(labels, off, len);
    else s.label = one_hot_curves(labels, off, len, n_classes);
    ws.samples.push_back(std::move(s));
    ws.offsets.push_back(off);
  }
  return ws;
}

/// Whether grid point t of a window at `off` is at least `margin` samples
/// from both window edges and from every label change.
inline bool interior_point(std::span<const int> labels, std::size_t off, std::size_t len, std::size_t t,
                           std::size_t margin) {
  if (t < margin || t + margin >= len) return false;
  const std::size_t lo = off + t - margin, hi = off + t + margin;
  for (std::size_t i = lo; i <= hi; ++i)
    if (labels[i] != labels[off + t]) return false;
  return true;
}

}  // namespace detail

/// Trains on the leading train_fraction of the recording and evaluates on
/// the rest. Writes metrics.csv, confusion.csv, history.csv,
/// predictions.csv and manifest.txt into cfg.out_dir.
inline StreamResult run_stream(const ExperimentConfig& cfg, const Recording& rec) {
  cfg.validate();
  if (!rec.has_labels()) throw ParseError(1, "recording has no label column");
  int n_classes = 0;
  for (int l : rec.labels) {
    if (l < 1) throw LabelOutOfRangeError("stream labels must be positive");
    n_classes = std::max(n_classes, l);
  }
  const double span_seconds = rec.time.back() - rec.time.front();
  if (!(span_seconds > 0.0)) throw ParseError(1, "time column must increase");
  const double rate = static_cast<double>(rec.length() - 1) / span_seconds;

  StreamResult res;
  res.window_len = detail::samples_for(cfg.window_seconds, rate);
  res.step = std::max<std::size_t>(1, detail::samples_for(cfg.step_seconds, rate));
  if (res.window_len < 2) throw ConfigError("stream.window_seconds", "window shorter than two samples");

  const MultiCurve data = rec.data();
  const auto split = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(rec.length())));
  if (split < res.window_len || rec.length() - split < res.window_len) {
    throw ConfigError("stream.window_seconds", "recording too short for a window in each split");
  }
  const WindowSet train_ws = detail::make_windows(data, rec.labels, 0, split, res.window_len, res.step, cfg.head,
                                                  n_classes, cfg.max_windows, res.train_windows);
  const WindowSet test_ws = detail::make_windows(data, rec.labels, split, rec.length(), res.window_len, res.step,
                                                 cfg.head, n_classes, cfg.max_windows, res.test_windows);

  const std::size_t d = rec.channels.size();
  const auto c = static_cast<std::size_t>(n_classes);
  Model model = cfg.head == HeadKind::scalar ? make_scalar_fnn(d, c, cfg.arch) : make_functional_fnn(d, c, cfg.arch);
  const TrialSeeds seeds = trial_seeds(cfg.seed);
  initialize_parameters(model, seeds.init, res.window_len);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.shuffle;
  res.history = train(model, train_ws.samples, tc, &test_ws.samples);

  const Evaluation ev = evaluate(model, test_ws.samples, true);
  res.confusion = ConfusionMatrix(n_classes);
  std::string preds;
  const auto margin = static_cast<std::size_t>(std::llround(cfg.interior_fraction * static_cast<double>(res.window_len)));
  std::size_t interior_hits = 0, interior_total = 0;
  if (cfg.head == HeadKind::scalar) {
    preds = "window,offset,true_class,predicted_class";
    for (std::size_t k = 1; k <= c; ++k) preds += ",p" + std::to_string(k);
    preds += "\n";
    for (std::size_t i = 0; i < test_ws.samples.size(); ++i) {
      const auto& p = std::get<std::vector<double>>(ev.predictions[i]);
      const int truth = test_ws.samples[i].class_index(), guess = predicted_class(p);
      res.confusion.add(truth, guess);
      preds += std::to_string(i) + "," + std::to_string(test_ws.offsets[i]) + "," + std::to_string(truth) + "," +
               std::to_string(guess);
      for (double v : p) preds += "," + format_double(v);
      preds += "\n";
    }
  } else {
    preds = "window,offset,t,true_class,predicted_class";
    for (std::size_t k = 1; k <= c; ++k) preds += ",p" + std::to_string(k);
    preds += "\n";
    double acc = 0.0;
    std::size_t written = 0;
    for (std::size_t i = 0; i < test_ws.samples.size(); ++i) {
      const auto& p = std::get<MultiCurve>(ev.predictions[i]);
      const auto& truth = test_ws.samples[i].label_curves();
      const std::size_t off = test_ws.offsets[i];
      add_per_timepoint(res.confusion, truth, p);
      acc += per_timepoint_metrics(truth, p);
      bool transition = false;
      for (std::size_t t = 0; t < res.window_len; ++t) {
        const int tc_true = rec.labels[off + t];
        const int guess = static_cast<int>(detail::argmax_at(p, t)) + 1;
        transition = transition || tc_true != rec.labels[off];
        if (detail::interior_point(rec.labels, off, res.window_len, t, margin)) {
          ++interior_total;
          interior_hits += guess == tc_true;
        }
      }
      if (transition && written < cfg.prediction_windows) {
        ++written;
        for (std::size_t t = 0; t < res.window_len; ++t) {
          preds += std::to_string(i) + "," + std::to_string(off) + "," + std::to_string(t) + "," +
                   std::to_string(rec.labels[off + t]) + "," +
                   std::to_string(detail::argmax_at(p, t) + 1);
          for (std::size_t k = 0; k < c; ++k) preds += "," + format_double(p.channel(k)[t]);
          preds += "\n";
        }
      }
    }
    res.per_timepoint_accuracy = acc / static_cast<double>(test_ws.samples.size());
    res.interior_accuracy =
        interior_total ? static_cast<double>(interior_hits) / static_cast<double>(interior_total) : 0.0;
  }
  res.metrics = metrics(res.confusion);

  const auto dir = detail::prepare_out(cfg);
  std::string m = metrics_csv(res.metrics);
  m += "train_windows," + std::to_string(res.train_windows) + "\n";
  m += "test_windows," + std::to_string(res.test_windows) + "\n";
  if (cfg.head == HeadKind::functional) {
    m += "per_timepoint_accuracy," + format_double(res.per_timepoint_accuracy) + "\n";
    m += "interior_accuracy," + format_double(res.interior_accuracy) + "\n";
  }
  detail::write_file(dir / "metrics.csv", m);
  detail::write_file(dir / "confusion.csv", detail::confusion_csv(res.confusion));
  std::string history = "epoch,split,loss,accuracy\n";
  for (const auto& h : res.history) {
    history += std::to_string(h.epoch) + "," + h.split + "," + format_double(h.loss) + "," +
               format_double(h.accuracy) + "\n";
  }
  detail::write_file(dir / "history.csv", history);
  detail::write_file(dir / "predictions.csv", preds);
  detail::write_file(dir / "manifest.txt", manifest_text(cfg));
  return res;
}

inline StreamResult run_stream(const ExperimentConfig& cfg) {
  if (cfg.stream_input.empty()) throw ConfigError("stream.input", "no recording given");
  return run_stream(cfg, read_recording_file(cfg.stream_input));
}

// --- gradient checks -----------------------------------------------------------------------------

struct GradCheckCase {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

/// The model families checked by the `gradcheck` verb: each trainable layer
/// type on its own (behind the fixed prefix) and the full scalar architecture.
inline Model gradcheck_model(const std::string& name, const ArchitectureSpec& arch) {
  const std::size_t d = 2, c = 3;
  // Single trainable layers get 8 outputs so that each has at least 100
  // coefficients to sample; labels 1..3 remain valid.
  const std::size_t wide = 8;
  std::size_t ch = 0;
  const ArchitectureSpec fixed{arch.lle, {}, arch.filter_len, arch.basis, arch.hidden};
  if (name == "conv") {
    auto layers = detail::feature_stack(d, fixed, ch);
    layers.emplace_back(ConvLayer{FuncConvParams::zeros(ch, wide, arch.filter_len, arch.basis, Activation::softmax)});
    return Model(d, std::move(layers));
  }
  if (name == "dense") {
    auto layers = detail::feature_stack(d, fixed, ch);
    layers.emplace_back(DenseLayer{FuncDenseParams::zeros(ch, wide, arch.basis, Activation::softmax, false)});
    return Model(d, std::move(layers));
  }
  if (name == "dense_functional") {
    auto layers = detail::feature_stack(d, fixed, ch);
    layers.emplace_back(DenseLayer{FuncDenseParams::zeros(ch, 4, arch.basis, Activation::elu, true)});
    layers.emplace_back(ConvLayer{FuncConvParams::zeros(4, c, arch.filter_len, arch.basis, Activation::softmax)});
    return Model(d, std::move(layers));
  }
  if (name == "functional_head") return make_functional_fnn(d, c, arch);
  if (name == "full") return make_scalar_fnn(d, c, arch);
  throw Error("unknown gradient-check model '" + name + "'");
}

inline const std::vector<std::string>& gradcheck_names() {
  static const std::vector<std::string> names = {"conv", "dense", "dense_functional", "functional_head", "full"};
  return names;
}

/// One sample of simulated data set (II) with a random bias so that every
/// coefficient has a nonzero gradient; functional heads get a one-hot label.
inline LabeledSample gradcheck_sample(const Model& model, std::size_t length, std::uint64_t seed) {
  SimConfig sc;
  sc.n_samples = 1;
  sc.n_timepoints = length;
  sc.seed = seed;
  LabeledSample s = generate(sc).front();
  if (model.head() == HeadKind::functional) {
    std::vector<int> labels(length, s.class_index());
    for (std::size_t t = length / 2; t < length; ++t) labels[t] = s.class_index() % 3 + 1;
    s.label = one_hot_curves(labels, 0, length, static_cast<int>(model.n_classes()));
  }
  return s;
}

inline std::vector<GradCheckCase> run_gradcheck(const ExperimentConfig& cfg, std::size_t seeds = 5,
                                                std::size_t length = 64) {
  cfg.validate();
  std::vector<GradCheckCase> out;
  for (const auto& name : gradcheck_names()) {
    for (std::size_t k = 0; k < seeds; ++k) {
      const std::uint64_t seed = cfg.seed + k;
      Model model = gradcheck_model(name, cfg.arch);
      initialize_parameters(model, derive_seed(seed, 1), length);
      Rng rng(derive_seed(seed, 2));
      for (auto block : model.parameters())
        for (double& v : block) v += 0.1 * rng.normal();
      GradCheckOptions opt;
      opt.seed = derive_seed(seed, 3);
      out.push_back({name, seed, gradient_check(model, gradcheck_sample(model, length, derive_seed(seed, 0)), opt)});
    }
  }
  return out;
}

// --- data export -------------------------------------------------------------------------------------

/// Simulations: dataset.csv in the recording schema plus sample_curves.csv
/// with three samples of each class. Stream: stream.csv, a synthetic
/// labelled recording.
inline void export_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = detail::prepare_out(cfg);
  if (cfg.experiment == ExperimentKind::stream) {
    StreamConfig sc;
    sc.length = cfg.fixture_length;
    sc.noise_sd = cfg.fixture_noise_sd;
    sc.seed = trial_seeds(cfg.seed).data;
    std::ostringstream out;
    write_recording_csv(out, to_recording(gen_labeled_stream(sc)));
    detail::write_file(dir / "stream.csv", out.str());
  } else {
    SimConfig sc;
    sc.n_samples = cfg.n_samples;
    sc.n_timepoints = cfg.n_timepoints;
    sc.seed = trial_seeds(cfg.seed).data;
    sc.dataset = cfg.experiment == ExperimentKind::sim1 ? SimDataset::one : SimDataset::two;
    sc.noise_sd = cfg.noise_sd;
    std::vector<SimDraw> draws;
    const auto samples = generate(sc, &draws);
    std::ostringstream out;
    write_recording_csv(out, dataset_recording(samples));
    detail::write_file(dir / "dataset.csv", out.str());

    std::vector<LabeledSample> picked;
    std::vector<SimDraw> picked_draws;
    std::map<int, int> seen;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (seen[samples[i].class_index()]++ < 3) {
        picked.push_back(samples[i]);
        picked_draws.push_back(draws[i]);
      }
    }
    std::ostringstream curves;
    write_sample_curves_csv(curves, sc, picked, picked_draws);
    detail::write_file(dir / "sample_curves.csv", curves.str());
  }
  detail::write_file(dir / "manifest.txt", manifest_text(cfg));
}

}  // namespace fnn
