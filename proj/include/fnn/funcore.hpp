// Discretized functions on the unit interval.
//
// A Grid of length T carries the sample points t/T, t = 1..T. Curves and
// MultiCurves are immutable values on a grid; integrals use the
// right-endpoint Riemann rule with weight 1/T, so every integral is a plain
// dot product.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fnn/error.hpp"

namespace fnn {

class Grid {
 public:
  explicit Grid(std::size_t length) : length_(length) {
    if (length < 2) throw Error("grid length must be at least 2, got " + std::to_string(length));
  }

  std::size_t size() const noexcept { return length_; }
  double spacing() const noexcept { return 1.0 / static_cast<double>(length_); }
  /// Point of the 0-based sample index i, i.e. (i+1)/T.
  double point(std::size_t i) const noexcept {
    return static_cast<double>(i + 1) / static_cast<double>(length_);
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t length_;
};

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value");
  }
}

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (a != b) {
    throw GridMismatchError("grid mismatch: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
}

}  // namespace detail

class Curve {
 public:
  Curve(Grid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw ShapeMismatchError("curve has " + std::to_string(values_.size()) +
                               " values for a grid of length " + std::to_string(grid_.size()));
    }
    detail::require_finite(values_, "curve");
  }

  /// Samples f at every grid point.
  template <typename F>
  static Curve sample(Grid grid, F&& f) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.point(i));
    return Curve(grid, std::move(v));
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Channels of one observation, stored channel-major in a flat buffer.
class MultiCurve {
 public:
  MultiCurve(Grid grid, std::size_t channels, std::vector<double> data)
      : grid_(grid), channels_(channels), data_(std::move(data)) {
    if (channels_ == 0) throw ShapeMismatchError("multicurve needs at least one channel");
    if (data_.size() != channels_ * grid_.size()) {
      throw ShapeMismatchError("multicurve buffer size " + std::to_string(data_.size()) +
                               " does not match " + std::to_string(channels_) + " x " +
                               std::to_string(grid_.size()));
    }
    detail::require_finite(data_, "multicurve");
  }

  explicit MultiCurve(const std::vector<Curve>& curves)
      : MultiCurve(from_curves(curves)) {}

  const Grid& grid() const noexcept { return grid_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t length() const noexcept { return grid_.size(); }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * grid_.size(), grid_.size());
  }
  Curve curve(std::size_t c) const {
    auto ch = channel(c);
    return Curve(grid_, std::vector<double>(ch.begin(), ch.end()));
  }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const MultiCurve&, const MultiCurve&) = default;

 private:
  static MultiCurve from_curves(const std::vector<Curve>& curves) {
    if (curves.empty()) throw ShapeMismatchError("multicurve needs at least one channel");
    const Grid g = curves.front().grid();
    std::vector<double> data;
    data.reserve(curves.size() * g.size());
    for (const auto& c : curves) {
      detail::require_same_grid(g, c.grid());
      data.insert(data.end(), c.values().begin(), c.values().end());
    }
    return MultiCurve(g, curves.size(), std::move(data));
  }

  Grid grid_;
  std::size_t channels_;
  std::vector<double> data_;
};

/// A sample with either a 1-based class index or per-class label curves.
struct LabeledSample {
  MultiCurve data;
  std::variant<int, MultiCurve> label;

  bool has_functional_label() const noexcept { return std::holds_alternative<MultiCurve>(label); }
  int class_index() const { return std::get<int>(label); }
  const MultiCurve& label_curves() const { return std::get<MultiCurve>(label); }
};

/// Checks that functional labels form a probability assignment at every grid point.
inline void validate_functional_label(const MultiCurve& label, double tol = 1e-9) {
  for (std::size_t t = 0; t < label.length(); ++t) {
    double sum = 0.0;
    for (std::size_t c = 0; c < label.channels(); ++c) {
      const double v = label.channel(c)[t];
      if (v < 0.0) throw Error("functional label is negative at grid point " + std::to_string(t));
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw Error("functional label does not sum to 1 at grid point " + std::to_string(t));
    }
  }
}

/// Right-endpoint Riemann rule on raw samples.
inline double integrate(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

inline double integrate(const Curve& f) { return integrate(f.values()); }

inline double inner_product(std::span<const double> f, std::span<const double> g) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
  return s / static_cast<double>(f.size());
}

inline double inner_product(const Curve& f, const Curve& g) {
  detail::require_same_grid(f.grid(), g.grid());
  return inner_product(f.values(), g.values());
}

// --- sliding windows --------------------------------------------------------

inline std::size_t count_windows(std::size_t length, std::size_t window_len, std::size_t step) {
  if (window_len == 0 || step == 0) throw Error("window length and step must be positive");
  if (window_len > length) {
    throw EmptyWindowError("window length " + std::to_string(window_len) +
                           " exceeds recording length " + std::to_string(length));
  }
  return (length - window_len) / step + 1;
}

inline std::vector<std::size_t> window_offsets(std::size_t length, std::size_t window_len,
                                               std::size_t step) {
  const std::size_t n = count_windows(length, window_len, step);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i * step;
  return out;
}

/// One window re-gridded onto its own unit-interval grid of length window_len.
inline MultiCurve extract_window(const MultiCurve& recording, std::size_t offset,
                                 std::size_t window_len) {
  if (offset + window_len > recording.length()) {
    throw EmptyWindowError("window [" + std::to_string(offset) + ", " +
                           std::to_string(offset + window_len) + ") exceeds recording");
  }
  std::vector<double> data;
  data.reserve(recording.channels() * window_len);
  for (std::size_t c = 0; c < recording.channels(); ++c) {
    auto ch = recording.channel(c).subspan(offset, window_len);
    data.insert(data.end(), ch.begin(), ch.end());
  }
  return MultiCurve(Grid(window_len), recording.channels(), std::move(data));
}

inline std::vector<MultiCurve> extract_windows(const MultiCurve& recording, std::size_t window_len,
                                               std::size_t step) {
  std::vector<MultiCurve> out;
  for (std::size_t off : window_offsets(recording.length(), window_len, step)) {
    out.push_back(extract_window(recording, off, window_len));
  }
  return out;
}

/// Most frequent class among labels[offset, offset+len); ties go to the lower class.
inline int majority_label(std::span<const int> labels, std::size_t offset, std::size_t len) {
  std::map<int, std::size_t> counts;
  for (std::size_t i = offset; i < offset + len; ++i) ++counts[labels[i]];
  int best = 0;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

/// One-hot label curves for labels[offset, offset+len) over classes 1..n_classes.
inline MultiCurve one_hot_curves(std::span<const int> labels, std::size_t offset, std::size_t len,
                                 int n_classes) {
  std::vector<double> data(static_cast<std::size_t>(n_classes) * len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    const int l = labels[offset + i];
    if (l < 1 || l > n_classes) {
      throw LabelOutOfRangeError("label " + std::to_string(l) + " outside 1.." +
                                 std::to_string(n_classes));
    }
    data[static_cast<std::size_t>(l - 1) * len + i] = 1.0;
  }
  return MultiCurve(Grid(len), static_cast<std::size_t>(n_classes), std::move(data));
}

}  // namespace fnn
