// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Output directories go under argv[1] (default
// ./acceptance_out); argv[2], if given, is a comma-separated subset such as
// "4,5,6".
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "fnn/fnn.hpp"

using namespace fnn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + what + (ok ? " ok" : " FAIL");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path root;

ExperimentConfig sim_config(ExperimentKind kind, std::size_t n, const std::string& out) {
  ExperimentConfig c;
  c.experiment = kind;
  c.n_samples = n;
  c.trials = 10;
  c.seed = 1;
  c.out_dir = (root / out).string();
  return c;
}

// KNN half of the simulation protocol alone: same seeds, split and sweep.
double knn_best_mean(ExperimentKind kind, std::size_t n, std::size_t trials, std::uint64_t seed) {
  std::vector<std::size_t> ks;
  for (std::size_t k = 1; k <= 19; ++k) ks.push_back(k);
  std::vector<double> mean(ks.size(), 0.0);
  for (std::size_t i = 0; i < trials; ++i) {
    SimConfig sc;
    sc.n_samples = n;
    sc.seed = trial_seeds(seed + i).data;
    sc.dataset = kind == ExperimentKind::sim1 ? SimDataset::one : SimDataset::two;
    const auto all = generate(sc);
    const auto cut = static_cast<std::ptrdiff_t>(std::llround(0.8 * static_cast<double>(n)));
    const std::vector<LabeledSample> tr(all.begin(), all.begin() + cut), te(all.begin() + cut, all.end());
    const auto acc = knn_sweep(tr, te, ks, LLEConfig{});
    for (std::size_t j = 0; j < ks.size(); ++j) mean[j] += acc[j] / static_cast<double>(trials);
  }
  return *std::max_element(mean.begin(), mean.end());
}

MultiCurve random_curves(std::size_t ch, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(ch * T);
  for (double& x : v) x = rng.normal();
  return MultiCurve(Grid(T), ch, v);
}

FuncConvParams random_conv(std::size_t in, std::size_t out, std::size_t len, std::uint64_t seed, bool bias) {
  auto p = FuncConvParams::zeros(in, out, len, BasisSpec{}, Activation::identity);
  Rng rng(seed);
  for (double& v : p.filter_coeffs) v = rng.normal();
  if (bias)
    for (double& v : p.bias_coeffs) v = rng.normal();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto r = run_simulation(sim_config(ExperimentKind::sim2, 1000, "c1_sim2"));
  Outcome o;
  o.check(r.fnn_mean >= 0.97, "FNN " + fmt("%.4f", r.fnn_mean) + " >= 0.97");
  o.check(r.knn_best_mean >= 0.70 && r.knn_best_mean <= 0.90,
          "KNN best k=" + std::to_string(r.best_k) + " " + fmt("%.4f", r.knn_best_mean) + " in [0.70, 0.90]");
  o.check(r.fnn_mean - r.knn_best_mean >= 0.10, "gap " + fmt("%.4f", r.fnn_mean - r.knn_best_mean) + " >= 0.10");
  return o;
}

double c2_knn = -1.0;

Outcome criterion2() {
  const auto r = run_simulation(sim_config(ExperimentKind::sim1, 1000, "c2_sim1"));
  c2_knn = r.knn_best_mean;
  Outcome o;
  o.check(r.fnn_mean >= 0.97, "FNN " + fmt("%.4f", r.fnn_mean) + " >= 0.97");
  o.check(r.knn_best_mean >= 0.89 && r.knn_best_mean <= 0.97,
          "KNN best k=" + std::to_string(r.best_k) + " " + fmt("%.4f", r.knn_best_mean) + " in [0.89, 0.97]");
  return o;
}

Outcome criterion3() {
  const double small = knn_best_mean(ExperimentKind::sim1, 1000, 10, 1);
  const double large = knn_best_mean(ExperimentKind::sim1, 5000, 10, 1);
  Outcome o;
  if (c2_knn >= 0) o.check(std::abs(small - c2_knn) < 1e-15, "N=1000 agrees with the full simulation");
  o.check(large > small, "KNN N=5000 " + fmt("%.4f", large) + " > N=1000 " + fmt("%.4f", small));
  return o;
}

Outcome criterion4() {
  ExperimentConfig c;
  c.seed = 1;
  double worst = 0.0;
  std::size_t fewest = SIZE_MAX, cases = 0, failed = 0;
  for (const auto& r : run_gradcheck(c, 5, 64)) {
    ++cases;
    Model m = gradcheck_model(r.name, c.arch);
    const std::size_t want = std::min<std::size_t>(100, m.parameter_count());
    worst = std::max(worst, r.report.max_rel_error);
    fewest = std::min(fewest, r.report.entries.size());
    if (!r.report.passed || r.report.entries.size() < want) ++failed;
  }
  Outcome o;
  o.check(failed == 0, std::to_string(cases) + " model/seed cases, max rel error " + fmt("%.2e", worst) +
                           " <= 1e-4, at least " + std::to_string(fewest) + " coefficients each");
  return o;
}

Outcome criterion5() {
  const std::size_t T = 250, shift = 10, len = 25, r = len / 2;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MultiCurve x = random_curves(3, T, seed);
    std::vector<double> xs(3 * T, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = shift; t < T; ++t) xs[c * T + t] = x.channel(c)[t - shift];
    const auto p = random_conv(3, 4, len, seed + 100, false);
    const MultiCurve y = func_conv_forward(x, p), ys = func_conv_forward(MultiCurve(x.grid(), 3, xs), p);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t t = r + shift; t + r + shift < T; ++t)
        worst = std::max(worst, std::abs(ys.channel(k)[t] - y.channel(k)[t - shift]));
  }
  Outcome o;
  o.check(worst <= 1e-10, "max deviation " + fmt("%.2e", worst) + " <= 1e-10");
  return o;
}

double wls(std::span<const double> y, std::size_t i, int h, int degree, int order) {
  const auto T = static_cast<double>(y.size());
  const auto lo = static_cast<std::ptrdiff_t>(i) - h, hi = static_cast<std::ptrdiff_t>(i) + h;
  Eigen::MatrixXd X(hi - lo + 1, degree + 1);
  Eigen::VectorXd b(hi - lo + 1);
  for (auto j = lo; j <= hi; ++j) {
    const double u = static_cast<double>(j - static_cast<std::ptrdiff_t>(i)) / h;
    const double w = std::sqrt(quartic_kernel(u));
    for (int a = 0; a <= degree; ++a) X(j - lo, a) = w * std::pow(static_cast<double>(j - static_cast<std::ptrdiff_t>(i)) / T, a);
    b(j - lo) = w * y[static_cast<std::size_t>(j)];
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(b);
  return std::tgamma(order + 1.0) * beta(order);
}

Outcome criterion6() {
  Outcome o;
  // (a) convolution against direct summation, T = 50.
  double conv_err = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const std::size_t T = 50, len = 9, r = 4;
    const MultiCurve x = random_curves(2, T, seed);
    const auto p = random_conv(2, 3, len, seed + 7, true);
    const MultiCurve y = func_conv_forward(x, p);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t s = 0; s < T; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
          for (std::size_t t = 0; t < T; ++t) {
            const auto o2 = static_cast<std::ptrdiff_t>(s) - static_cast<std::ptrdiff_t>(t);
            if (std::abs(o2) > static_cast<std::ptrdiff_t>(r)) continue;
            double u = 0.0;
            for (std::size_t i = 0; i < 5; ++i)
              u += p.filter_coeffs[(j * 3 + k) * 5 + i] * legendre_eval(i, static_cast<double>(o2) / r);
            acc += u * x.channel(j)[t];
          }
        }
        double bias = 0.0;
        for (std::size_t i = 0; i < 5; ++i) bias += p.bias_coeffs[k * 5 + i] * legendre_eval(i, 2 * (s + 1.0) / T - 1);
        conv_err = std::max(conv_err, std::abs(y.channel(k)[s] - (bias + acc / T)));
      }
    }
  }
  o.check(conv_err <= 1e-12, "(a) conv vs direct sum " + fmt("%.1e", conv_err));

  // (b) interior smoothing: library output, explicit filter convolution and
  // per-point weighted least squares all agree.
  const LLEConfig lle{};
  const std::size_t T = 250;
  double smooth_err = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const MultiCurve x = random_curves(2, T, 50 + seed);
    const MultiCurve s = lle_smooth(x, lle);
    for (int order = 0; order <= lle.derivative_orders; ++order) {
      const int h = lle.bandwidths[static_cast<std::size_t>(order)];
      const auto filt = lle_filter(lle, order, T);
      for (std::size_t c = 0; c < 2; ++c) {
        const auto xc = x.channel(c);
        const auto sc = s.channel(static_cast<std::size_t>(order) * 2 + c);
        for (std::size_t i = static_cast<std::size_t>(h); i + static_cast<std::size_t>(h) < T; ++i) {
          double conv = 0.0;
          for (std::size_t m = 0; m < filt.size(); ++m) conv += filt[m] * xc[i + static_cast<std::size_t>(h) - m];
          const double ref = wls(xc, i, h, lle.degree, order);
          const double scale = std::max(1.0, std::abs(ref));
          smooth_err = std::max({smooth_err, std::abs(conv - ref) / scale, std::abs(sc[i] - ref) / scale});
        }
      }
    }
  }
  o.check(smooth_err <= 1e-12, "(b) smoother vs filter vs WLS " + fmt("%.1e", smooth_err));

  // (c) noiseless lines are reproduced at every grid point, slope included.
  double line_err = 0.0;
  const Grid g(T);
  for (auto [a, b] : {std::pair{0.3, -1.7}, std::pair{-2.0, 5.0}, std::pair{1.0, 0.0}}) {
    const MultiCurve line(std::vector<Curve>{Curve::sample(g, [&](double t) { return a + b * t; })});
    const MultiCurve s = lle_smooth(line, lle);
    for (std::size_t i = 0; i < T; ++i) {
      line_err = std::max(line_err, std::abs(s.channel(0)[i] - (a + b * g.point(i))));
      line_err = std::max(line_err, std::abs(s.channel(1)[i] - b));
    }
  }
  o.check(line_err <= 1e-9, "(c) line reproduction " + fmt("%.1e", line_err));
  return o;
}

Outcome criterion7() {
  double mean_err = 0.0, norm_err = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MultiCurve x = random_curves(4, 50 + 10 * seed, seed);
    std::vector<double> v(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 3.0 * v[i] + static_cast<double>(seed);
    const MultiCurve s = standardize(MultiCurve(x.grid(), 4, v));
    for (std::size_t c = 0; c < 4; ++c) {
      mean_err = std::max(mean_err, std::abs(integrate(s.channel(c))));
      norm_err = std::max(norm_err, std::abs(std::sqrt(inner_product(s.channel(c), s.channel(c))) - 1.0));
    }
  }
  bool raised = false;
  try {
    standardize(MultiCurve(Grid(30), 1, std::vector<double>(30, 2.5)));
  } catch (const DegenerateChannelError&) {
    raised = true;
  }
  Outcome o;
  o.check(mean_err <= 1e-10, "|mean| " + fmt("%.1e", mean_err));
  o.check(norm_err <= 1e-10, "|norm - 1| " + fmt("%.1e", norm_err));
  o.check(raised, "constant channel raises");
  return o;
}

Outcome criterion8() {
  Outcome o;
  double sum_err = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model m = make_functional_fnn(2, 3);
    initialize_parameters(m, seed);
    Rng rng(seed);
    for (auto b : m.parameters())
      for (double& v : b) v += rng.normal();
    const auto y = std::get<MultiCurve>(forward(m, random_curves(2, 250, seed + 9)));
    for (std::size_t t = 0; t < 250; ++t)
      sum_err = std::max(sum_err, std::abs(y.channel(0)[t] + y.channel(1)[t] + y.channel(2)[t] - 1.0));
  }
  o.check(sum_err <= 1e-12, "pointwise sum error " + fmt("%.1e", sum_err));

  ExperimentConfig c;
  c.experiment = ExperimentKind::stream;
  c.head = HeadKind::functional;
  c.out_dir = (root / "c8_stream").string();
  StreamConfig sc;
  sc.length = c.fixture_length;
  sc.noise_sd = c.fixture_noise_sd;
  sc.seed = trial_seeds(c.seed).data;
  const auto r = run_stream(c, to_recording(gen_labeled_stream(sc)));
  o.check(r.interior_accuracy >= 0.8, "interior per-timepoint accuracy " + fmt("%.4f", r.interior_accuracy) +
                                          " >= 0.8 (" + std::to_string(r.test_windows) + " test windows)");
  return o;
}

Outcome criterion9() {
  const std::size_t length = 45 * 60 * 250;
  const std::size_t win = static_cast<std::size_t>(std::llround(1.0 * 250)), step = static_cast<std::size_t>(std::llround(0.016 * 250));
  const std::size_t n = count_windows(length, win, step);
  Outcome o;
  o.check(n > 125000, std::to_string(n) + " windows > 125000");
  return o;
}

Outcome criterion10() {
  Outcome o;
  auto compare = [&](const std::string& name, ExperimentConfig c, const std::function<void(const ExperimentConfig&)>& run) {
    c.out_dir = (root / ("c10_" + name + "_a")).string();
    run(c);
    ExperimentConfig again = load_config_file((fs::path(c.out_dir) / "manifest.txt").string());
    again.stream_input = c.stream_input;
    again.out_dir = (root / ("c10_" + name + "_b")).string();
    run(again);
    std::size_t files = 0, same = 0;
    for (const auto& e : fs::directory_iterator(c.out_dir)) {
      ++files;
      same += slurp(e.path()) == slurp(fs::path(again.out_dir) / e.path().filename());
    }
    o.check(files > 0 && files == same, name + " " + std::to_string(same) + "/" + std::to_string(files) + " files identical");
  };
  ExperimentConfig small;
  small.n_samples = 100;
  small.trials = 2;
  small.seed = 5;
  small.arch.filters = {4};
  small.train.epochs = 1;
  small.knn_k_max = 9;
  small.experiment = ExperimentKind::sim1;
  compare("sim1", small, [](const ExperimentConfig& c) { run_simulation(c); });
  small.experiment = ExperimentKind::sim2;
  compare("sim2", small, [](const ExperimentConfig& c) { run_simulation(c); });

  ExperimentConfig st = small;
  st.experiment = ExperimentKind::stream;
  st.head = HeadKind::functional;
  st.fixture_length = 4000;
  st.max_windows = 40;
  st.out_dir = (root / "c10_fixture").string();
  export_data(st);
  st.stream_input = (fs::path(st.out_dir) / "stream.csv").string();
  compare("stream", st, [](const ExperimentConfig& c) { run_stream(c); });
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(root);
  const std::pair<const char*, Outcome (*)()> criteria[] = {
      {"1  data set II table reproduction", criterion1},
      {"2  data set I table reproduction", criterion2},
      {"3  KNN improves with N on data set I", criterion3},
      {"4  gradient correctness", criterion4},
      {"5  conv shift equivariance", criterion5},
      {"6  oracle equivalences", criterion6},
      {"7  standardization contract", criterion7},
      {"8  functional-output head", criterion8},
      {"9  sliding-window count", criterion9},
      {"10 manifest determinism", criterion10},
  };
  std::vector<int> only;
  if (argc > 2) {
    std::stringstream list(argv[2]);
    std::string item;
    while (std::getline(list, item, ',')) only.push_back(std::stoi(item));
  }
  int failed = 0, ran = 0;
  for (int idx = 1; idx <= 10; ++idx) {
    if (!only.empty() && std::find(only.begin(), only.end(), idx) == only.end()) continue;
    const auto& [name, run] = criteria[idx - 1];
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %s: %s (%.0f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
