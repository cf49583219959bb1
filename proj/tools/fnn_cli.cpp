// fnn: run simulation studies, the sliding-window pipeline, gradient checks
// and data export from the command line.
#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "fnn/fnn.hpp"

namespace {

struct Common {
  std::string config_path;
  std::map<std::string, std::string> values;  // key -> flag text
};

// Short flags named in the usage text, each an alias for a config key.
const std::map<std::string, std::string> aliases = {
    {"experiment", "experiment"}, {"n-samples", "data.n_samples"}, {"trials", "run.trials"},
    {"seed", "run.seed"},         {"out", "io.out"},               {"workers", "run.workers"},
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file (a manifest works)");
  for (const auto& [flag, key] : aliases) {
    cmd->add_option("--" + flag, c.values[key], fnn::find_field(key)->help);
  }
  for (const auto& f : fnn::config_fields()) {
    if (f.key == "experiment") continue;
    cmd->add_option("--" + f.key, c.values["=" + f.key], f.help);
  }
}

fnn::ExperimentConfig resolve(CLI::App* cmd, const Common& c, fnn::ExperimentConfig cfg) {
  if (!c.config_path.empty()) cfg = fnn::load_config_file(c.config_path, cfg);
  for (const auto& [flag, key] : aliases) {
    if (cmd->count("--" + flag)) fnn::set_config_value(cfg, key, c.values.at(key));
  }
  for (const auto& f : fnn::config_fields()) {
    if (f.key != "experiment" && cmd->count("--" + f.key)) fnn::set_config_value(cfg, f.key, c.values.at("=" + f.key));
  }
  cfg.validate();
  return cfg;
}

void print_simulation(const fnn::SimulationResult& r) {
  std::printf("FNN  test accuracy  %.4f (sd %.4f)\n", r.fnn_mean, r.fnn_std);
  std::printf("FNN  train accuracy %.4f (sd %.4f)\n", r.fnn_train_mean, r.fnn_train_std);
  std::printf("KNN  best k = %zu    %.4f (sd %.4f)\n", r.best_k, r.knn_best_mean, r.knn_best_std);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional neural networks for multichannel curves"};
  app.require_subcommand(1);

  Common sim, stream, grad, exp;
  auto* sim_cmd = app.add_subcommand("simulate", "simulation study: FNN against the KNN sweep");
  add_common(sim_cmd, sim);
  auto* stream_cmd = app.add_subcommand("stream", "train and evaluate on windows of a labelled recording");
  add_common(stream_cmd, stream);
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(grad_cmd, grad);
  std::size_t grad_seeds = 5;
  grad_cmd->add_option("--seeds", grad_seeds, "random seeds per model");
  auto* exp_cmd = app.add_subcommand("export-data", "write generated data sets or a synthetic recording as CSV");
  add_common(exp_cmd, exp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      const auto cfg = resolve(sim_cmd, sim, {});
      print_simulation(fnn::run_simulation(cfg));
      std::printf("results written to %s\n", cfg.out_dir.c_str());
    } else if (stream_cmd->parsed()) {
      fnn::ExperimentConfig base;
      base.experiment = fnn::ExperimentKind::stream;
      const auto cfg = resolve(stream_cmd, stream, base);
      const auto r = fnn::run_stream(cfg);
      std::printf("windows: %zu train, %zu test (length %zu, step %zu)\n", r.train_windows, r.test_windows,
                  r.window_len, r.step);
      std::printf("accuracy %.4f  macro recall %.4f  macro precision %.4f\n", r.metrics.accuracy,
                  r.metrics.macro_recall, r.metrics.macro_precision);
      if (cfg.head == fnn::HeadKind::functional) {
        std::printf("per-timepoint accuracy %.4f  interior %.4f\n", r.per_timepoint_accuracy, r.interior_accuracy);
      }
      std::printf("results written to %s\n", cfg.out_dir.c_str());
    } else if (grad_cmd->parsed()) {
      const auto cfg = resolve(grad_cmd, grad, {});
      bool ok = true;
      for (const auto& c : fnn::run_gradcheck(cfg, grad_seeds)) {
        std::printf("%-18s seed %-6llu max rel error %.3e  %s\n", c.name.c_str(),
                    static_cast<unsigned long long>(c.seed), c.report.max_rel_error,
                    c.report.passed ? "ok" : "FAIL");
        ok = ok && c.report.passed;
      }
      return ok ? 0 : 1;
    } else if (exp_cmd->parsed()) {
      const auto cfg = resolve(exp_cmd, exp, {});
      fnn::export_data(cfg);
      std::printf("data written to %s\n", cfg.out_dir.c_str());
    }
  } catch (const fnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
