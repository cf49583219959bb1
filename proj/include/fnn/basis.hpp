// Finite function bases for weight, bias and filter functions.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fnn/error.hpp"
#include "fnn/funcore.hpp"

namespace fnn {

/// Legendre polynomial P_i(x) on [-1, 1] by the Bonnet recurrence
/// (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}.
inline double legendre_eval(std::size_t i, double x) noexcept {
  if (i == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (std::size_t n = 1; n < i; ++n) {
    const double nd = static_cast<double>(n);
    const double next = ((2.0 * nd + 1.0) * x * cur - nd * prev) / (nd + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// 1, sin(2 pi x), cos(2 pi x), sin(4 pi x), cos(4 pi x), ... on [0, 1].
inline double fourier_eval(std::size_t i, double x) noexcept {
  if (i == 0) return 1.0;
  const double m = static_cast<double>((i + 1) / 2);
  const double arg = 2.0 * std::numbers::pi * m * x;
  return (i % 2 == 1) ? std::sin(arg) : std::cos(arg);
}

enum class BasisFamily { legendre, fourier };

inline std::string to_string(BasisFamily f) {
  return f == BasisFamily::legendre ? "legendre" : "fourier";
}

inline BasisFamily basis_family_from_string(const std::string& s) {
  if (s == "legendre") return BasisFamily::legendre;
  if (s == "fourier") return BasisFamily::fourier;
  throw Error("unknown basis family '" + s + "'");
}

/// A basis family with `count` functions, evaluated on [lo, hi] through an
/// affine map onto the family's canonical domain ([-1,1] Legendre, [0,1] Fourier).
struct BasisSpec {
  BasisFamily family = BasisFamily::legendre;
  std::size_t count = 5;
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    if (count == 0) throw Error("basis count must be positive");
    if (family == BasisFamily::fourier && count % 2 == 0) {
      throw Error("fourier basis count must be odd");
    }
    if (!(hi > lo)) throw Error("basis domain must have positive length");
  }

  BasisSpec on(double new_lo, double new_hi) const {
    BasisSpec s = *this;
    s.lo = new_lo;
    s.hi = new_hi;
    return s;
  }

  double canonical(double x) const noexcept {
    const double u = (x - lo) / (hi - lo);
    return family == BasisFamily::legendre ? 2.0 * u - 1.0 : u;
  }

  double eval(std::size_t i, double x) const noexcept {
    const double c = canonical(x);
    return family == BasisFamily::legendre ? legendre_eval(i, c) : fourier_eval(i, c);
  }

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

/// Basis functions evaluated at a fixed set of points, row-major [count x points].
class BasisMatrix {
 public:
  BasisMatrix(const BasisSpec& spec, std::span<const double> points)
      : count_(spec.count), points_(points.size()), values_(spec.count * points.size()) {
    spec.validate();
    for (std::size_t i = 0; i < count_; ++i)
      for (std::size_t p = 0; p < points_; ++p) values_[i * points_ + p] = spec.eval(i, points[p]);
  }

  /// Evaluated at the grid points t/T.
  static BasisMatrix on_grid(const BasisSpec& spec, const Grid& grid) {
    std::vector<double> pts(grid.size());
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = grid.point(i);
    return BasisMatrix(spec.on(0.0, 1.0), pts);
  }

  /// Evaluated at filter offsets -r..r (r = (filter_len-1)/2), i.e. the support
  /// [-r/T, r/T] mapped onto the canonical domain.
  static BasisMatrix on_filter(const BasisSpec& spec, std::size_t filter_len) {
    if (filter_len % 2 == 0) throw Error("filter length must be odd");
    const auto r = static_cast<double>((filter_len - 1) / 2);
    std::vector<double> pts(filter_len);
    for (std::size_t m = 0; m < filter_len; ++m) pts[m] = static_cast<double>(m) - r;
    // A length-1 filter has a degenerate support; evaluate at its centre.
    return r > 0 ? BasisMatrix(spec.on(-r, r), pts) : BasisMatrix(spec.on(-1.0, 1.0), pts);
  }

  std::size_t count() const noexcept { return count_; }
  std::size_t points() const noexcept { return points_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * points_, points_);
  }
  double operator()(std::size_t i, std::size_t p) const noexcept { return values_[i * points_ + p]; }

  /// out[p] = sum_i coeffs[i] * phi_i(p).
  void expand_into(std::span<const double> coeffs, std::span<double> out) const {
    if (coeffs.size() != count_) {
      throw ShapeMismatchError("expected " + std::to_string(count_) + " coefficients, got " +
                               std::to_string(coeffs.size()));
    }
    for (std::size_t p = 0; p < points_; ++p) out[p] = 0.0;
    for (std::size_t i = 0; i < count_; ++i) {
      const double c = coeffs[i];
      const double* r = values_.data() + i * points_;
      for (std::size_t p = 0; p < points_; ++p) out[p] += c * r[p];
    }
  }

  std::vector<double> expand(std::span<const double> coeffs) const {
    std::vector<double> out(points_);
    expand_into(coeffs, out);
    return out;
  }

  /// Adjoint of expand: dcoeffs[i] += sum_p phi_i(p) * dvalues[p].
  void project_into(std::span<const double> dvalues, std::span<double> dcoeffs) const {
    for (std::size_t i = 0; i < count_; ++i) {
      const double* r = values_.data() + i * points_;
      double s = 0.0;
      for (std::size_t p = 0; p < points_; ++p) s += r[p] * dvalues[p];
      dcoeffs[i] += s;
    }
  }

 private:
  std::size_t count_;
  std::size_t points_;
  std::vector<double> values_;
};

/// Weight function on the unit interval, sampled on `grid`.
inline Curve expand(std::span<const double> coeffs, const BasisSpec& spec, const Grid& grid) {
  return Curve(grid, BasisMatrix::on_grid(spec, grid).expand(coeffs));
}

/// Filter values at offsets -r..r.
inline std::vector<double> expand_filter(std::span<const double> coeffs, const BasisSpec& spec,
                                         std::size_t filter_len) {
  return BasisMatrix::on_filter(spec, filter_len).expand(coeffs);
}

}  // namespace fnn
