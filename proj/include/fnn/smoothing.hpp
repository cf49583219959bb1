// Local polynomial smoothing and derivative estimation.
//
// At grid index i the estimator fits a degree-p polynomial in (t/T - x) to the
// samples within `h` grid samples, weighted by K((t - xT)/h). The fit is a
// linear functional of the data, so each estimate is stored as its
// equivalent-kernel weights; the interior weights reversed form a filter
// whose convolution with the signal reproduces the fit away from the
// boundary. Near 0 and 1 the window is truncated and solved as-is.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fnn/error.hpp"
#include "fnn/funcore.hpp"

namespace fnn {

inline double quartic_kernel(double x) noexcept {
  if (x < -1.0 || x > 1.0) return 0.0;
  const double a = 1.0 - x * x;
  return 15.0 / 16.0 * a * a;
}

struct KernelSpec {
  enum class Kind { quartic };
  Kind kind = Kind::quartic;

  double operator()(double x) const noexcept { return quartic_kernel(x); }
};

struct LLEConfig {
  int degree = 1;
  /// Half-widths in grid samples, one per derivative order 0..derivative_orders.
  std::vector<int> bandwidths{5, 10};
  KernelSpec kernel{};
  int derivative_orders = 1;

  void validate() const {
    if (degree < 0 || degree > 2) throw Error("lle degree must be in 0..2");
    if (derivative_orders < 0 || derivative_orders > degree) {
      throw Error("derivative orders must satisfy 0 <= D <= degree");
    }
    if (bandwidths.size() != static_cast<std::size_t>(derivative_orders) + 1) {
      throw Error("need one bandwidth per derivative order");
    }
    for (int h : bandwidths) {
      if (h < degree + 1) {
        throw Error("bandwidth " + std::to_string(h) + " is below degree + 1");
      }
    }
  }

  std::size_t output_channels(std::size_t input_channels) const {
    return input_channels * static_cast<std::size_t>(derivative_orders + 1);
  }
};

/// Equivalent-kernel weights of one local fit: estimate = sum_j weights[j] * X[first + j].
struct PointWeights {
  std::size_t first = 0;
  std::vector<double> weights;

  double apply(std::span<const double> signal) const {
    double s = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * signal[first + j];
    return s;
  }
};

namespace detail {

inline double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

/// Solves the symmetric (p+1)x(p+1) system m * v = rhs by Gaussian elimination
/// with partial pivoting. Throws on a singular system.
template <std::size_t N>
void solve_small(std::array<std::array<double, N>, N>& m, std::array<double, N>& rhs,
                 std::size_t n) {
  double scale = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) scale = std::max(scale, std::abs(m[r][c]));
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) <= 1e-13 * scale) {
      throw RankDeficientError("local polynomial system is singular");
    }
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  for (std::size_t r = n; r-- > 0;) {
    double s = rhs[r];
    for (std::size_t c = r + 1; c < n; ++c) s -= m[r][c] * rhs[c];
    rhs[r] = s / m[r][r];
  }
}

}  // namespace detail

/// Weights of the order-`order` derivative estimate at 0-based grid index `index`
/// for a grid of `length` samples, using half-width `bandwidth` samples.
inline PointWeights lle_point_weights(std::size_t length, std::size_t index, int bandwidth,
                                      int degree, int order, const KernelSpec& kernel) {
  if (order < 0 || order > degree) throw Error("derivative order exceeds polynomial degree");
  const auto h = static_cast<std::ptrdiff_t>(bandwidth);
  const auto i = static_cast<std::ptrdiff_t>(index);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - h);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(length) - 1, i + h);

  const std::size_t n = static_cast<std::size_t>(degree) + 1;
  std::array<std::array<double, 3>, 3> m{};
  std::vector<double> z, w;
  std::size_t positive = 0;
  for (std::ptrdiff_t j = lo; j <= hi; ++j) {
    const double zj = static_cast<double>(j - i) / static_cast<double>(h);
    const double wj = kernel(zj);
    z.push_back(zj);
    w.push_back(wj);
    if (wj > 0.0) ++positive;
    double pa = wj;
    for (std::size_t a = 0; a < 2 * n - 1; ++a) {
      for (std::size_t r = 0; r < n; ++r) {
        if (a >= r && a - r < n) m[r][a - r] += pa;
      }
      pa *= zj;
    }
  }
  if (positive < n) {
    throw RankDeficientError("only " + std::to_string(positive) + " weighted points for " +
                             std::to_string(n) + " coefficients at grid index " +
                             std::to_string(index));
  }
  std::array<double, 3> v{};
  v[static_cast<std::size_t>(order)] = 1.0;
  detail::solve_small(m, v, n);

  // z is in bandwidth units; rescale beta_order to the unit-interval monomials.
  const double scale = detail::factorial(order) *
                       std::pow(static_cast<double>(length) / static_cast<double>(h), order);
  PointWeights out;
  out.first = static_cast<std::size_t>(lo);
  out.weights.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    double poly = 0.0, zp = 1.0;
    for (std::size_t a = 0; a < n; ++a) {
      poly += v[a] * zp;
      zp *= z[j];
    }
    out.weights[j] = scale * w[j] * poly;
  }
  return out;
}

/// Estimate of the order-th derivative of the signal at 0-based grid index `index`.
inline double lle_fit_at(const Curve& signal, std::size_t index, const LLEConfig& config,
                         int order) {
  config.validate();
  if (order < 0 || order > config.degree) throw Error("derivative order exceeds polynomial degree");
  if (index >= signal.size()) throw Error("grid index out of range");
  const int h = config.bandwidths.at(static_cast<std::size_t>(order));
  return lle_point_weights(signal.size(), index, h, config.degree, order, config.kernel)
      .apply(signal.values());
}

/// Interior filter of length 2h+1 for a grid of `length` samples:
/// (filter * X)[i] = sum_m filter[m] X[i + h - m]. Derivative filters scale
/// with length^order, so the grid length is part of the filter.
inline std::vector<double> lle_filter(const LLEConfig& config, int order, std::size_t length) {
  config.validate();
  if (order < 0 || order > config.degree) throw Error("derivative order exceeds polynomial degree");
  const int h = config.bandwidths.at(static_cast<std::size_t>(order));
  const std::size_t len = 2 * static_cast<std::size_t>(h) + 1;
  if (length < len) throw EmptyWindowError("grid shorter than the filter");
  const PointWeights pw =
      lle_point_weights(length, static_cast<std::size_t>(h), h, config.degree, order, config.kernel);
  std::vector<double> filter(len);
  for (std::size_t m = 0; m < len; ++m) filter[m] = pw.weights[len - 1 - m];
  return filter;
}

/// Precomputed smoothing weights for every (order, grid point) on a grid of fixed length.
class SmoothingOperator {
 public:
  SmoothingOperator(const LLEConfig& config, std::size_t length) : config_(config), length_(length) {
    config_.validate();
    const auto orders = static_cast<std::size_t>(config_.derivative_orders) + 1;
    weights_.resize(orders);
    for (std::size_t k = 0; k < orders; ++k) {
      const int h = config_.bandwidths[k];
      weights_[k].reserve(length);
      for (std::size_t i = 0; i < length; ++i) {
        weights_[k].push_back(lle_point_weights(length, i, h, config_.degree, static_cast<int>(k),
                                                config_.kernel));
      }
    }
  }

  const LLEConfig& config() const noexcept { return config_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t orders() const noexcept { return weights_.size(); }

  /// Output channel layout: [ch1 order0, ..., chd order0, ch1 order1, ...].
  void apply(std::span<const double> in, std::size_t channels, std::span<double> out) const {
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      for (std::size_t c = 0; c < channels; ++c) {
        auto src = in.subspan(c * length_, length_);
        double* dst = out.data() + (k * channels + c) * length_;
        for (std::size_t i = 0; i < length_; ++i) dst[i] = weights_[k][i].apply(src);
      }
    }
  }

  /// Adjoint of apply: accumulates d(in) from d(out).
  void apply_transpose(std::span<const double> dout, std::size_t channels,
                       std::span<double> din) const {
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* g = dout.data() + (k * channels + c) * length_;
        double* dst = din.data() + c * length_;
        for (std::size_t i = 0; i < length_; ++i) {
          const auto& pw = weights_[k][i];
          for (std::size_t j = 0; j < pw.weights.size(); ++j) dst[pw.first + j] += pw.weights[j] * g[i];
        }
      }
    }
  }

 private:
  LLEConfig config_;
  std::size_t length_;
  std::vector<std::vector<PointWeights>> weights_;
};

inline MultiCurve lle_smooth(const MultiCurve& sample, const LLEConfig& config) {
  const SmoothingOperator op(config, sample.length());
  std::vector<double> out(config.output_channels(sample.channels()) * sample.length());
  op.apply(sample.data(), sample.channels(), out);
  return MultiCurve(sample.grid(), config.output_channels(sample.channels()), std::move(out));
}

}  // namespace fnn
