// Seeded generators for the two simulated classification data sets and a
// labeled multichannel stream for sliding-window tests.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fnn/error.hpp"
#include "fnn/funcore.hpp"
#include "fnn/random.hpp"

namespace fnn {

enum class SimDataset { one, two };

struct SimConfig {
  std::size_t n_samples = 1000;
  std::size_t n_timepoints = 250;
  std::uint64_t seed = 0;
  SimDataset dataset = SimDataset::two;
  /// Standard deviation of the additive noise; 0 gives the underlying signals.
  double noise_sd = 1.0;

  void validate() const {
    if (n_samples < 1) throw Error("n_samples must be at least 1");
    if (n_timepoints < 2) throw Error("n_timepoints must be at least 2");
    if (!(noise_sd >= 0.0)) throw Error("noise_sd must be non-negative");
  }
};

/// Random quantities behind one simulated sample.
struct SimDraw {
  int label = 1;
  double alpha = 0.0, beta = 0.0;  // data set (I)
  std::array<double, 2> shift{};   // data set (I)
  double width = 0.0, centre = 0.0;  // data set (II)
};

/// Class-dependent mixing coefficients gamma(c), c = 1..3.
inline std::array<double, 2> dataset1_gamma(int c) {
  switch (c) {
    case 1: return {0.0, 0.0};
    case 2: return {0.8, 0.4};
    case 3: return {0.4, 0.8};
  }
  throw LabelOutOfRangeError("class must be 1..3");
}

inline std::array<double, 2> dataset2_gamma(int c) {
  switch (c) {
    case 1: return {0.0, 0.0};
    case 2: return {1.0, 0.0};
    case 3: return {0.0, 1.0};
  }
  throw LabelOutOfRangeError("class must be 1..3");
}

inline double dataset1_signal(const SimDraw& d, std::size_t channel, double x) {
  const double g = dataset1_gamma(d.label)[channel];
  const double s = d.shift[channel];
  const double two_pi = 2.0 * std::numbers::pi;
  return (1.0 - g) * std::sin(two_pi * d.alpha * (x + s)) + g * std::sin(two_pi * d.beta * (x + s));
}

/// max(-4/w^2 (x - centre)^2 + 3, 0): height 3, support radius sqrt(3)/2 * w.
inline double spike(double x, double centre, double width) {
  return std::max(-4.0 / (width * width) * (x - centre) * (x - centre) + 3.0, 0.0);
}

inline double dataset2_signal(const SimDraw& d, std::size_t channel, double x) {
  return dataset2_gamma(d.label)[channel] * spike(x, d.centre, d.width);
}

namespace detail {

inline LabeledSample make_sample(const SimConfig& cfg, const SimDraw& draw, Rng& rng) {
  const Grid grid(cfg.n_timepoints);
  std::vector<double> data(2 * cfg.n_timepoints);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    for (std::size_t t = 0; t < cfg.n_timepoints; ++t) {
      const double x = grid.point(t);
      const double f = cfg.dataset == SimDataset::one ? dataset1_signal(draw, ch, x)
                                                      : dataset2_signal(draw, ch, x);
      data[ch * cfg.n_timepoints + t] = f + cfg.noise_sd * rng.normal();
    }
  }
  return LabeledSample{MultiCurve(grid, 2, std::move(data)), draw.label};
}

}  // namespace detail

/// Random quantities of one sample, drawn before its noise.
inline SimDraw sim_draw(const SimConfig& cfg, Rng& rng) {
  SimDraw d;
  if (cfg.dataset == SimDataset::one) {
    d.alpha = rng.uniform(8.0, 12.0);
    d.beta = rng.uniform(13.0, 30.0);
    d.shift = {rng.uniform(), rng.uniform()};
  } else {
    d.width = rng.uniform(0.05, 0.1);
    d.centre = rng.uniform();
  }
  d.label = static_cast<int>(rng.below(3)) + 1;
  return d;
}

/// Generates the configured data set; sample n uses sub-seed derive_seed(seed, n).
inline std::vector<LabeledSample> generate(const SimConfig& cfg, std::vector<SimDraw>* draws = nullptr) {
  cfg.validate();
  std::vector<LabeledSample> out;
  out.reserve(cfg.n_samples);
  for (std::size_t n = 0; n < cfg.n_samples; ++n) {
    Rng rng(derive_seed(cfg.seed, n));
    const SimDraw d = sim_draw(cfg, rng);
    if (draws) draws->push_back(d);
    out.push_back(detail::make_sample(cfg, d, rng));
  }
  return out;
}

inline std::vector<LabeledSample> gen_dataset1(SimConfig cfg) {
  cfg.dataset = SimDataset::one;
  return generate(cfg);
}

inline std::vector<LabeledSample> gen_dataset2(SimConfig cfg) {
  cfg.dataset = SimDataset::two;
  return generate(cfg);
}

/// Continuous multichannel recording with piecewise-constant class labels.
struct LabeledStream {
  MultiCurve data;
  std::vector<int> labels;  // 1-based, one per sample
  double sampling_rate = 250.0;
};

struct StreamConfig {
  std::size_t length = 5000;
  std::size_t channels = 2;
  int n_classes = 3;
  std::size_t min_segment = 300;
  std::size_t max_segment = 700;
  double sampling_rate = 250.0;
  double noise_sd = 0.3;
  std::uint64_t seed = 0;
};

/// Segments of random length, each with a random class. Class c drives a
/// sinusoid of c * 6 cycles per second on channel (c-1) mod channels with
/// amplitude 1 plus noise on all channels.
inline LabeledStream gen_labeled_stream(const StreamConfig& cfg) {
  if (cfg.length < 2 || cfg.channels == 0 || cfg.n_classes < 1 || cfg.min_segment == 0 ||
      cfg.max_segment < cfg.min_segment) {
    throw Error("invalid stream configuration");
  }
  Rng rng(cfg.seed);
  std::vector<int> labels(cfg.length);
  std::size_t pos = 0;
  while (pos < cfg.length) {
    const std::size_t seg = cfg.min_segment + rng.below(cfg.max_segment - cfg.min_segment + 1);
    const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_classes))) + 1;
    for (std::size_t i = pos; i < std::min(cfg.length, pos + seg); ++i) labels[i] = c;
    pos += seg;
  }
  std::vector<double> data(cfg.channels * cfg.length);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < cfg.length; ++i) {
    const double time = static_cast<double>(i) / cfg.sampling_rate;
    const int c = labels[i];
    const std::size_t active = static_cast<std::size_t>(c - 1) % cfg.channels;
    for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
      double v = cfg.noise_sd * rng.normal();
      if (ch == active) v += std::sin(two_pi * 6.0 * c * time);
      data[ch * cfg.length + i] = v;
    }
  }
  return LabeledStream{MultiCurve(Grid(cfg.length), cfg.channels, std::move(data)), std::move(labels),
                       cfg.sampling_rate};
}

}  // namespace fnn
