// Forward semantics of the functional layers.
//
// Every layer works on functions sampled on the grid t/T. Weight, bias and
// filter functions are basis expansions; the scalar coefficients are the
// trainable parameters. The raw kernels in `kernels::` operate on flat
// channel-major buffers and are shared with the training engine.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fnn/basis.hpp"
#include "fnn/error.hpp"
#include "fnn/funcore.hpp"

namespace fnn {

enum class Activation { identity, elu, softmax };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::elu: return "elu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "elu") return Activation::elu;
  if (s == "softmax") return Activation::softmax;
  throw Error("unknown activation '" + s + "'");
}

inline double elu(double x) noexcept { return x >= 0.0 ? x : std::expm1(x); }

/// exp-normalized with the maximum subtracted first.
inline std::vector<double> softmax_head(std::span<const double> values) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double mx = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

/// Convolution layer: filter u_{jk} on offsets -r..r, bias curve b_k on [0,1].
struct FuncConvParams {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t filter_len = 0;
  BasisSpec basis{};
  Activation activation = Activation::elu;
  std::vector<double> filter_coeffs;  // [in][out][basis.count]
  std::vector<double> bias_coeffs;    // [out][basis.count]

  static FuncConvParams zeros(std::size_t in, std::size_t out, std::size_t len, BasisSpec basis,
                              Activation act) {
    FuncConvParams p{in, out, len, basis, act, {}, {}};
    p.filter_coeffs.assign(in * out * basis.count, 0.0);
    p.bias_coeffs.assign(out * basis.count, 0.0);
    return p;
  }

  std::span<double> filter(std::size_t j, std::size_t k) {
    return std::span<double>(filter_coeffs).subspan((j * out_channels + k) * basis.count, basis.count);
  }
  std::span<double> bias(std::size_t k) {
    return std::span<double>(bias_coeffs).subspan(k * basis.count, basis.count);
  }

  void validate() const {
    basis.validate();
    if (in_channels == 0 || out_channels == 0) throw ShapeMismatchError("conv layer needs channels");
    if (filter_len == 0 || filter_len % 2 == 0) throw ShapeMismatchError("filter length must be odd");
    if (filter_coeffs.size() != in_channels * out_channels * basis.count ||
        bias_coeffs.size() != out_channels * basis.count) {
      throw ShapeMismatchError("conv coefficient tensors do not match the declared shape");
    }
  }
};

/// Dense layer. With `functional_output` false the neuron is the scalar product
/// of weight and input functions plus a scalar bias per neuron; otherwise the
/// weight multiplies pointwise and the bias is a basis-expanded curve.
struct FuncDenseParams {
  std::size_t in_channels = 0;
  std::size_t out_neurons = 0;
  BasisSpec basis{};
  Activation activation = Activation::softmax;
  bool functional_output = false;
  std::vector<double> weight_coeffs;  // [in][out][basis.count]
  std::vector<double> bias;           // [out] or [out][basis.count]

  static FuncDenseParams zeros(std::size_t in, std::size_t out, BasisSpec basis, Activation act,
                               bool functional_output) {
    FuncDenseParams p{in, out, basis, act, functional_output, {}, {}};
    p.weight_coeffs.assign(in * out * basis.count, 0.0);
    p.bias.assign(functional_output ? out * basis.count : out, 0.0);
    return p;
  }

  std::span<double> weight(std::size_t j, std::size_t k) {
    return std::span<double>(weight_coeffs).subspan((j * out_neurons + k) * basis.count, basis.count);
  }

  std::size_t bias_stride() const noexcept { return functional_output ? basis.count : 1; }

  void validate() const {
    basis.validate();
    if (in_channels == 0 || out_neurons == 0) throw ShapeMismatchError("dense layer needs neurons");
    if (weight_coeffs.size() != in_channels * out_neurons * basis.count ||
        bias.size() != out_neurons * bias_stride()) {
      throw ShapeMismatchError("dense coefficient tensors do not match the declared shape");
    }
  }
};

namespace kernels {

/// Standardizes each channel in place; `scales` receives the centered norms.
inline void standardize(std::span<double> data, std::size_t channels, std::size_t length,
                        std::span<double> scales) {
  for (std::size_t c = 0; c < channels; ++c) {
    auto ch = data.subspan(c * length, length);
    const double mean = integrate(ch);
    for (double& v : ch) v -= mean;
    const double norm = std::sqrt(inner_product(ch, ch));
    if (!(norm >= 1e-12)) {
      throw DegenerateChannelError("channel " + std::to_string(c) +
                                   " has zero spread and cannot be standardized");
    }
    for (double& v : ch) v /= norm;
    scales[c] = norm;
  }
}

/// dh = (dy - mean(dy) - y * mean(dy * y)) / s per channel.
inline void standardize_backward(std::span<const double> out, std::span<const double> dout,
                                 std::span<const double> scales, std::size_t channels,
                                 std::size_t length, std::span<double> din) {
  for (std::size_t c = 0; c < channels; ++c) {
    auto y = out.subspan(c * length, length);
    auto dy = dout.subspan(c * length, length);
    const double mdy = integrate(dy);
    const double mdyy = inner_product(dy, y);
    for (std::size_t t = 0; t < length; ++t) {
      din[c * length + t] += (dy[t] - mdy - y[t] * mdyy) / scales[c];
    }
  }
}

/// pre[k][s] = bias[k][s] + (1/T) sum_j sum_o filters[j][k][o+r] * in[j][s-o],
/// with the input zero outside the grid.
inline void conv_forward(std::span<const double> in, std::size_t in_ch, std::size_t out_ch,
                         std::size_t length, std::span<const double> filters,
                         std::size_t filter_len, std::span<const double> bias_curves,
                         std::span<double> pre) {
  const auto T = static_cast<std::ptrdiff_t>(length);
  const auto r = static_cast<std::ptrdiff_t>(filter_len / 2);
  const double inv_t = 1.0 / static_cast<double>(length);
  for (std::size_t k = 0; k < out_ch; ++k) {
    double* dst = pre.data() + k * length;
    for (std::size_t s = 0; s < length; ++s) dst[s] = bias_curves[k * length + s];
    for (std::size_t j = 0; j < in_ch; ++j) {
      const double* src = in.data() + j * length;
      const double* u = filters.data() + (j * out_ch + k) * filter_len;
      for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(filter_len); ++m) {
        const std::ptrdiff_t o = m - r;
        const double w = u[m] * inv_t;
        const std::ptrdiff_t s0 = std::max<std::ptrdiff_t>(0, o);
        const std::ptrdiff_t s1 = std::min<std::ptrdiff_t>(T, T + o);
        for (std::ptrdiff_t s = s0; s < s1; ++s) dst[s] += w * src[s - o];
      }
    }
  }
}

/// Gradients of conv_forward w.r.t. filter values and (optionally) its input.
inline void conv_backward(std::span<const double> in, std::size_t in_ch, std::size_t out_ch,
                          std::size_t length, std::span<const double> filters,
                          std::size_t filter_len, std::span<const double> dpre,
                          std::span<double> dfilters, std::span<double> din) {
  const auto T = static_cast<std::ptrdiff_t>(length);
  const auto r = static_cast<std::ptrdiff_t>(filter_len / 2);
  const double inv_t = 1.0 / static_cast<double>(length);
  for (std::size_t k = 0; k < out_ch; ++k) {
    const double* g = dpre.data() + k * length;
    for (std::size_t j = 0; j < in_ch; ++j) {
      const double* src = in.data() + j * length;
      const double* u = filters.data() + (j * out_ch + k) * filter_len;
      double* du = dfilters.data() + (j * out_ch + k) * filter_len;
      double* dx = din.empty() ? nullptr : din.data() + j * length;
      for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(filter_len); ++m) {
        const std::ptrdiff_t o = m - r;
        const std::ptrdiff_t s0 = std::max<std::ptrdiff_t>(0, o);
        const std::ptrdiff_t s1 = std::min<std::ptrdiff_t>(T, T + o);
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (std::ptrdiff_t s = s0; s < s1; ++s) acc += g[s] * src[s - o];
        du[m] += acc * inv_t;
        if (dx) {
          const double w = u[m] * inv_t;
          for (std::ptrdiff_t s = s0; s < s1; ++s) dx[s - o] += w * g[s];
        }
      }
    }
  }
}

inline void activate(Activation act, std::span<const double> pre, std::size_t channels,
                     std::size_t length, std::span<double> out) {
  switch (act) {
    case Activation::identity:
      std::copy(pre.begin(), pre.end(), out.begin());
      break;
    case Activation::elu:
      for (std::size_t i = 0; i < pre.size(); ++i) out[i] = elu(pre[i]);
      break;
    case Activation::softmax:
      // Across channels at every grid point (length 1 for scalar heads).
      for (std::size_t t = 0; t < length; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < channels; ++c) mx = std::max(mx, pre[c * length + t]);
        double sum = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          out[c * length + t] = std::exp(pre[c * length + t] - mx);
          sum += out[c * length + t];
        }
        for (std::size_t c = 0; c < channels; ++c) out[c * length + t] /= sum;
      }
      break;
  }
}

inline void activate_backward(Activation act, std::span<const double> pre,
                              std::span<const double> out, std::span<const double> dout,
                              std::size_t channels, std::size_t length, std::span<double> dpre) {
  switch (act) {
    case Activation::identity:
      std::copy(dout.begin(), dout.end(), dpre.begin());
      break;
    case Activation::elu:
      for (std::size_t i = 0; i < pre.size(); ++i) dpre[i] = pre[i] >= 0.0 ? dout[i] : dout[i] * (out[i] + 1.0);
      break;
    case Activation::softmax:
      for (std::size_t t = 0; t < length; ++t) {
        double dot = 0.0;
        for (std::size_t c = 0; c < channels; ++c) dot += out[c * length + t] * dout[c * length + t];
        for (std::size_t c = 0; c < channels; ++c) {
          dpre[c * length + t] = out[c * length + t] * (dout[c * length + t] - dot);
        }
      }
      break;
  }
}

}  // namespace kernels

/// Centers each channel by its integral and scales it to unit L2 norm.
inline MultiCurve standardize(const MultiCurve& sample) {
  std::vector<double> data(sample.data().begin(), sample.data().end());
  std::vector<double> scales(sample.channels());
  kernels::standardize(data, sample.channels(), sample.length(), scales);
  return MultiCurve(sample.grid(), sample.channels(), std::move(data));
}

/// Convolution with explicit filter values [in][out][filter_len] and bias
/// curves [out][T]; func_conv_forward materializes both from coefficients.
inline MultiCurve conv_apply(const MultiCurve& input, std::size_t out_channels,
                             std::span<const double> filters, std::size_t filter_len,
                             std::span<const double> bias_curves, Activation act) {
  const std::size_t T = input.length();
  if (filter_len > T) throw ShapeMismatchError("filter longer than the grid");
  if (filters.size() != input.channels() * out_channels * filter_len ||
      bias_curves.size() != out_channels * T) {
    throw ShapeMismatchError("filter or bias buffer has the wrong size");
  }
  std::vector<double> pre(out_channels * T), out(out_channels * T);
  kernels::conv_forward(input.data(), input.channels(), out_channels, T, filters, filter_len,
                        bias_curves, pre);
  kernels::activate(act, pre, out_channels, T, out);
  return MultiCurve(input.grid(), out_channels, std::move(out));
}

inline MultiCurve func_conv_forward(const MultiCurve& input, const FuncConvParams& params) {
  params.validate();
  if (input.channels() != params.in_channels) {
    throw ShapeMismatchError("conv layer expects " + std::to_string(params.in_channels) +
                             " channels, got " + std::to_string(input.channels()));
  }
  const std::size_t nb = params.basis.count;
  const BasisMatrix fb = BasisMatrix::on_filter(params.basis, params.filter_len);
  const BasisMatrix gb = BasisMatrix::on_grid(params.basis, input.grid());
  std::vector<double> filters(params.in_channels * params.out_channels * params.filter_len);
  for (std::size_t jk = 0; jk < params.in_channels * params.out_channels; ++jk) {
    fb.expand_into(std::span<const double>(params.filter_coeffs).subspan(jk * nb, nb),
                   std::span<double>(filters).subspan(jk * params.filter_len, params.filter_len));
  }
  const std::size_t T = input.length();
  std::vector<double> bias(params.out_channels * T);
  for (std::size_t k = 0; k < params.out_channels; ++k) {
    gb.expand_into(std::span<const double>(params.bias_coeffs).subspan(k * nb, nb),
                   std::span<double>(bias).subspan(k * T, T));
  }
  return conv_apply(input, params.out_channels, filters, params.filter_len, bias,
                    params.activation);
}

namespace detail {

inline std::vector<double> dense_weight_curves(const FuncDenseParams& params, const Grid& grid) {
  const BasisMatrix gb = BasisMatrix::on_grid(params.basis, grid);
  const std::size_t T = grid.size(), nb = params.basis.count;
  std::vector<double> w(params.in_channels * params.out_neurons * T);
  for (std::size_t jk = 0; jk < params.in_channels * params.out_neurons; ++jk) {
    gb.expand_into(std::span<const double>(params.weight_coeffs).subspan(jk * nb, nb),
                   std::span<double>(w).subspan(jk * T, T));
  }
  return w;
}

inline void check_dense(const MultiCurve& input, const FuncDenseParams& params, bool functional) {
  params.validate();
  if (params.functional_output != functional) {
    throw ShapeMismatchError("dense parameters have the wrong output kind");
  }
  if (input.channels() != params.in_channels) {
    throw ShapeMismatchError("dense layer expects " + std::to_string(params.in_channels) +
                             " channels, got " + std::to_string(input.channels()));
  }
}

}  // namespace detail

/// H_k = sigma(b_k + sum_j <w_jk, H_j>).
inline std::vector<double> func_dense_scalar_forward(const MultiCurve& input,
                                                     const FuncDenseParams& params) {
  detail::check_dense(input, params, false);
  const std::size_t T = input.length();
  const auto w = detail::dense_weight_curves(params, input.grid());
  std::vector<double> pre(params.out_neurons), out(params.out_neurons);
  for (std::size_t k = 0; k < params.out_neurons; ++k) {
    double z = params.bias[k];
    for (std::size_t j = 0; j < params.in_channels; ++j) {
      z += inner_product(std::span<const double>(w).subspan((j * params.out_neurons + k) * T, T),
                         input.channel(j));
    }
    pre[k] = z;
  }
  kernels::activate(params.activation, pre, params.out_neurons, 1, out);
  return out;
}

/// H_k(t) = sigma(b_k(t) + sum_j w_jk(t) H_j(t)).
inline MultiCurve func_dense_functional_forward(const MultiCurve& input,
                                                const FuncDenseParams& params) {
  detail::check_dense(input, params, true);
  const std::size_t T = input.length(), nb = params.basis.count;
  const auto w = detail::dense_weight_curves(params, input.grid());
  const BasisMatrix gb = BasisMatrix::on_grid(params.basis, input.grid());
  std::vector<double> pre(params.out_neurons * T), out(params.out_neurons * T);
  for (std::size_t k = 0; k < params.out_neurons; ++k) {
    auto dst = std::span<double>(pre).subspan(k * T, T);
    gb.expand_into(std::span<const double>(params.bias).subspan(k * nb, nb), dst);
    for (std::size_t j = 0; j < params.in_channels; ++j) {
      const double* wj = w.data() + (j * params.out_neurons + k) * T;
      auto h = input.channel(j);
      for (std::size_t t = 0; t < T; ++t) dst[t] += wj[t] * h[t];
    }
  }
  kernels::activate(params.activation, pre, params.out_neurons, T, out);
  return MultiCurve(input.grid(), params.out_neurons, std::move(out));
}

}  // namespace fnn
