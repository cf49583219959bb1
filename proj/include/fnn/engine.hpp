// Forward/backward execution, loss, optimizers, training and gradient checks.
//
// An Executor materializes every basis expansion of a model for one grid
// length (filters, weight curves, bias curves, smoothing weights). Backward
// accumulates gradients in that materialized space and projects them onto
// the basis coefficients once per batch.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fnn/basis.hpp"
#include "fnn/error.hpp"
#include "fnn/funcore.hpp"
#include "fnn/layers.hpp"
#include "fnn/model.hpp"
#include "fnn/random.hpp"
#include "fnn/smoothing.hpp"

namespace fnn {

/// Class probabilities (scalar head) or per-class probability curves (functional head).
using Prediction = std::variant<std::vector<double>, MultiCurve>;
using Label = std::variant<int, MultiCurve>;

/// Channel-major activations; scalar outputs have length 1.
struct Buffer {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> values;
};

struct Trace {
  std::size_t start = 0;
  /// outputs[i] is the input of layer start+i; outputs.back() is the model output.
  std::vector<Buffer> outputs;
  std::vector<std::vector<double>> pre;     // pre-activations, per executed layer
  std::vector<std::vector<double>> scales;  // standardization norms, per executed layer
};

/// Gradients w.r.t. the materialized weights of each layer.
struct MaterialGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;
};

constexpr double kProbabilityFloor = 1e-12;

class Executor {
 public:
  Executor(const Model& model, std::size_t length) : model_(&model), length_(length) {
    const Grid grid(length);
    for (const auto& layer : model.layers()) {
      Prepared p;
      if (auto* lle = std::get_if<LleLayer>(&layer)) {
        p.smoother = std::make_shared<SmoothingOperator>(lle->config, length);
      } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
        const auto& cp = c->params;
        if (cp.filter_len > length) throw ShapeMismatchError("filter longer than the grid");
        const std::size_t nb = cp.basis.count;
        p.filter_basis.emplace(BasisMatrix::on_filter(cp.basis, cp.filter_len));
        p.grid_basis.emplace(BasisMatrix::on_grid(cp.basis, grid));
        p.weights.resize(cp.in_channels * cp.out_channels * cp.filter_len);
        for (std::size_t jk = 0; jk < cp.in_channels * cp.out_channels; ++jk) {
          p.filter_basis->expand_into(
              std::span<const double>(cp.filter_coeffs).subspan(jk * nb, nb),
              std::span<double>(p.weights).subspan(jk * cp.filter_len, cp.filter_len));
        }
        p.bias.resize(cp.out_channels * length);
        for (std::size_t k = 0; k < cp.out_channels; ++k) {
          p.grid_basis->expand_into(std::span<const double>(cp.bias_coeffs).subspan(k * nb, nb),
                                    std::span<double>(p.bias).subspan(k * length, length));
        }
      } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
        const auto& dp = d->params;
        const std::size_t nb = dp.basis.count;
        p.grid_basis.emplace(BasisMatrix::on_grid(dp.basis, grid));
        p.weights.resize(dp.in_channels * dp.out_neurons * length);
        for (std::size_t jk = 0; jk < dp.in_channels * dp.out_neurons; ++jk) {
          p.grid_basis->expand_into(std::span<const double>(dp.weight_coeffs).subspan(jk * nb, nb),
                                    std::span<double>(p.weights).subspan(jk * length, length));
        }
        if (dp.functional_output) {
          p.bias.resize(dp.out_neurons * length);
          for (std::size_t k = 0; k < dp.out_neurons; ++k) {
            p.grid_basis->expand_into(std::span<const double>(dp.bias).subspan(k * nb, nb),
                                      std::span<double>(p.bias).subspan(k * length, length));
          }
        } else {
          p.bias = dp.bias;
        }
      }
      prepared_.push_back(std::move(p));
    }
  }

  std::size_t length() const noexcept { return length_; }
  const Model& model() const noexcept { return *model_; }

  /// Runs layers [start, end) on `input`.
  Trace forward(Buffer input, std::size_t start = 0, std::size_t end = SIZE_MAX) const {
    const auto& layers = model_->layers();
    end = std::min(end, layers.size());
    if (input.length != length_) throw ShapeMismatchError("input length differs from executor grid");
    Trace tr;
    tr.start = start;
    tr.outputs.push_back(std::move(input));
    for (std::size_t i = start; i < end; ++i) {
      const Buffer& in = tr.outputs.back();
      Buffer out;
      std::vector<double> pre, scales;
      const auto& p = prepared_[i];
      const auto& layer = layers[i];
      if (auto* lle = std::get_if<LleLayer>(&layer)) {
        out.channels = lle->config.output_channels(in.channels);
        out.length = in.length;
        out.values.resize(out.channels * out.length);
        p.smoother->apply(in.values, in.channels, out.values);
      } else if (std::holds_alternative<StandardizeLayer>(layer)) {
        out = in;
        scales.resize(in.channels);
        kernels::standardize(out.values, out.channels, out.length, scales);
      } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
        const auto& cp = c->params;
        check_channels(i, in.channels, cp.in_channels);
        pre.resize(cp.out_channels * length_);
        kernels::conv_forward(in.values, cp.in_channels, cp.out_channels, length_, p.weights,
                              cp.filter_len, p.bias, pre);
        out.channels = cp.out_channels;
        out.length = length_;
        out.values.resize(pre.size());
        kernels::activate(cp.activation, pre, out.channels, out.length, out.values);
      } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
        const auto& dp = d->params;
        check_channels(i, in.channels, dp.in_channels);
        const double inv_t = 1.0 / static_cast<double>(length_);
        if (dp.functional_output) {
          pre = p.bias;
          for (std::size_t k = 0; k < dp.out_neurons; ++k) {
            double* dst = pre.data() + k * length_;
            for (std::size_t j = 0; j < dp.in_channels; ++j) {
              const double* w = p.weights.data() + (j * dp.out_neurons + k) * length_;
              const double* h = in.values.data() + j * length_;
              for (std::size_t t = 0; t < length_; ++t) dst[t] += w[t] * h[t];
            }
          }
          out.length = length_;
        } else {
          pre = p.bias;
          for (std::size_t k = 0; k < dp.out_neurons; ++k) {
            double z = 0.0;
            for (std::size_t j = 0; j < dp.in_channels; ++j) {
              const double* w = p.weights.data() + (j * dp.out_neurons + k) * length_;
              const double* h = in.values.data() + j * length_;
#pragma omp simd reduction(+ : z)
              for (std::size_t t = 0; t < length_; ++t) z += w[t] * h[t];
            }
            pre[k] += z * inv_t;
          }
          out.length = 1;
        }
        out.channels = dp.out_neurons;
        out.values.resize(pre.size());
        kernels::activate(dp.activation, pre, out.channels, out.length, out.values);
      }
      tr.outputs.push_back(std::move(out));
      tr.pre.push_back(std::move(pre));
      tr.scales.push_back(std::move(scales));
    }
    return tr;
  }

  MaterialGrads zero_grads() const {
    MaterialGrads g;
    for (const auto& p : prepared_) {
      g.weights.emplace_back(p.weights.size(), 0.0);
      g.bias.emplace_back(p.bias.size(), 0.0);
    }
    return g;
  }

  /// Reverse pass over the layers executed in `tr`. Accumulates into `acc` and
  /// returns the gradient w.r.t. the trace input when `input_grad` is set.
  std::vector<double> backward(const Trace& tr, std::span<const double> dout, MaterialGrads& acc,
                               bool input_grad) const {
    const auto& layers = model_->layers();
    std::vector<double> grad(dout.begin(), dout.end());
    const std::size_t executed = tr.outputs.size() - 1;
    for (std::size_t n = executed; n-- > 0;) {
      const std::size_t i = tr.start + n;
      const Buffer& in = tr.outputs[n];
      const Buffer& out = tr.outputs[n + 1];
      const auto& p = prepared_[i];
      const auto& layer = layers[i];
      const bool need_din = input_grad || upstream_trainable(tr.start, i);
      std::vector<double> din;
      if (need_din) din.assign(in.values.size(), 0.0);

      if (std::holds_alternative<LleLayer>(layer)) {
        if (need_din) p.smoother->apply_transpose(grad, in.channels, din);
      } else if (std::holds_alternative<StandardizeLayer>(layer)) {
        if (need_din) {
          kernels::standardize_backward(out.values, grad, tr.scales[n], out.channels, out.length, din);
        }
      } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
        const auto& cp = c->params;
        std::vector<double> dpre(grad.size());
        kernels::activate_backward(cp.activation, tr.pre[n], out.values, grad, out.channels,
                                   out.length, dpre);
        auto& db = acc.bias[i];
        for (std::size_t q = 0; q < dpre.size(); ++q) db[q] += dpre[q];
        kernels::conv_backward(in.values, cp.in_channels, cp.out_channels, length_, p.weights,
                               cp.filter_len, dpre, acc.weights[i], din);
      } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
        const auto& dp = d->params;
        std::vector<double> dpre(grad.size());
        kernels::activate_backward(dp.activation, tr.pre[n], out.values, grad, out.channels,
                                   out.length, dpre);
        auto& db = acc.bias[i];
        for (std::size_t q = 0; q < dpre.size(); ++q) db[q] += dpre[q];
        auto& dw = acc.weights[i];
        const double inv_t = 1.0 / static_cast<double>(length_);
        for (std::size_t k = 0; k < dp.out_neurons; ++k) {
          for (std::size_t j = 0; j < dp.in_channels; ++j) {
            const std::size_t off = (j * dp.out_neurons + k) * length_;
            const double* h = in.values.data() + j * length_;
            const double* w = p.weights.data() + off;
            double* dx = need_din ? din.data() + j * length_ : nullptr;
            if (dp.functional_output) {
              const double* g = dpre.data() + k * length_;
              for (std::size_t t = 0; t < length_; ++t) {
                dw[off + t] += g[t] * h[t];
                if (dx) dx[t] += g[t] * w[t];
              }
            } else {
              const double g = dpre[k] * inv_t;
              for (std::size_t t = 0; t < length_; ++t) {
                dw[off + t] += g * h[t];
                if (dx) dx[t] += g * w[t];
              }
            }
          }
        }
      }
      grad = std::move(din);
      if (grad.empty() && n > 0 && !input_grad) break;
    }
    return input_grad ? grad : std::vector<double>{};
  }

  /// Maps material-space gradients onto the coefficient blocks of
  /// Model::parameters(), scaled by `scale`.
  std::vector<std::vector<double>> project(const MaterialGrads& acc, double scale) const {
    std::vector<std::vector<double>> out;
    const auto& layers = model_->layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& p = prepared_[i];
      if (auto* c = std::get_if<ConvLayer>(&layers[i])) {
        const auto& cp = c->params;
        const std::size_t nb = cp.basis.count;
        std::vector<double> dw(cp.filter_coeffs.size(), 0.0), db(cp.bias_coeffs.size(), 0.0);
        for (std::size_t jk = 0; jk < cp.in_channels * cp.out_channels; ++jk) {
          p.filter_basis->project_into(
              std::span<const double>(acc.weights[i]).subspan(jk * cp.filter_len, cp.filter_len),
              std::span<double>(dw).subspan(jk * nb, nb));
        }
        for (std::size_t k = 0; k < cp.out_channels; ++k) {
          p.grid_basis->project_into(std::span<const double>(acc.bias[i]).subspan(k * length_, length_),
                                     std::span<double>(db).subspan(k * nb, nb));
        }
        for (double& v : dw) v *= scale;
        for (double& v : db) v *= scale;
        out.push_back(std::move(dw));
        out.push_back(std::move(db));
      } else if (auto* d = std::get_if<DenseLayer>(&layers[i])) {
        const auto& dp = d->params;
        const std::size_t nb = dp.basis.count;
        std::vector<double> dw(dp.weight_coeffs.size(), 0.0), db(dp.bias.size(), 0.0);
        for (std::size_t jk = 0; jk < dp.in_channels * dp.out_neurons; ++jk) {
          p.grid_basis->project_into(std::span<const double>(acc.weights[i]).subspan(jk * length_, length_),
                                     std::span<double>(dw).subspan(jk * nb, nb));
        }
        if (dp.functional_output) {
          for (std::size_t k = 0; k < dp.out_neurons; ++k) {
            p.grid_basis->project_into(
                std::span<const double>(acc.bias[i]).subspan(k * length_, length_),
                std::span<double>(db).subspan(k * nb, nb));
          }
        } else {
          db = acc.bias[i];
        }
        for (double& v : dw) v *= scale;
        for (double& v : db) v *= scale;
        out.push_back(std::move(dw));
        out.push_back(std::move(db));
      }
    }
    return out;
  }

 private:
  struct Prepared {
    std::shared_ptr<const SmoothingOperator> smoother;
    std::optional<BasisMatrix> filter_basis;
    std::optional<BasisMatrix> grid_basis;
    std::vector<double> weights;
    std::vector<double> bias;
  };

  bool upstream_trainable(std::size_t start, std::size_t layer) const {
    const auto& layers = model_->layers();
    for (std::size_t i = start; i < layer; ++i)
      if (is_trainable(layers[i])) return true;
    return false;
  }

  static void check_channels(std::size_t layer, std::size_t have, std::size_t want) {
    if (have != want) {
      throw ShapeMismatchError("layer " + std::to_string(layer) + " expects " +
                               std::to_string(want) + " channels, got " + std::to_string(have));
    }
  }

  const Model* model_;
  std::size_t length_;
  std::vector<Prepared> prepared_;
};

inline Buffer to_buffer(const MultiCurve& x) {
  return Buffer{x.channels(), x.length(), std::vector<double>(x.data().begin(), x.data().end())};
}

inline Prediction to_prediction(const Buffer& out, HeadKind head) {
  if (head == HeadKind::scalar) return out.values;
  return MultiCurve(Grid(out.length), out.channels, out.values);
}

inline Prediction forward(const Model& model, const MultiCurve& sample) {
  if (sample.channels() != model.input_channels()) {
    throw ShapeMismatchError("model expects " + std::to_string(model.input_channels()) +
                             " input channels, got " + std::to_string(sample.channels()));
  }
  const Executor ex(model, sample.length());
  const Trace tr = ex.forward(to_buffer(sample));
  return to_prediction(tr.outputs.back(), model.head());
}

// --- loss --------------------------------------------------------------------

/// Cross-entropy of probabilities (class-major, `length` points per class)
/// against a label; functional labels average over grid points. Probabilities
/// are clamped below at 1e-12. Writes d(loss)/d(probs) when `grad` is non-empty.
inline double cross_entropy_raw(std::span<const double> probs, std::size_t classes,
                                std::size_t length, const Label& label, std::span<double> grad) {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  if (const int* cls = std::get_if<int>(&label)) {
    if (length != 1) throw ShapeMismatchError("scalar label used with a functional prediction");
    if (*cls < 1 || static_cast<std::size_t>(*cls) > classes) {
      throw LabelOutOfRangeError("label " + std::to_string(*cls) + " outside 1.." +
                                 std::to_string(classes));
    }
    const double p = probs[static_cast<std::size_t>(*cls - 1)];
    if (!grad.empty() && p > kProbabilityFloor) grad[static_cast<std::size_t>(*cls - 1)] = -1.0 / p;
    return -std::log(std::max(p, kProbabilityFloor));
  }
  const auto& y = std::get<MultiCurve>(label);
  if (y.channels() != classes || y.length() != length) {
    throw ShapeMismatchError("label curves do not match the prediction shape");
  }
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(length);
  for (std::size_t c = 0; c < classes; ++c) {
    auto yc = y.channel(c);
    for (std::size_t t = 0; t < length; ++t) {
      if (yc[t] == 0.0) continue;
      const double p = probs[c * length + t];
      loss -= yc[t] * std::log(std::max(p, kProbabilityFloor));
      if (!grad.empty() && p > kProbabilityFloor) grad[c * length + t] = -yc[t] / p * inv;
    }
  }
  return loss * inv;
}

inline double cross_entropy(const Prediction& pred, const Label& label) {
  if (const auto* v = std::get_if<std::vector<double>>(&pred)) {
    return cross_entropy_raw(*v, v->size(), 1, label, {});
  }
  const auto& m = std::get<MultiCurve>(pred);
  return cross_entropy_raw(m.data(), m.channels(), m.length(), label, {});
}

/// 1-based argmax over classes.
inline int predicted_class(std::span<const double> probs) {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()) + 1;
}

/// Fraction of correct decisions in one output: 0/1 for scalar heads, the
/// per-timepoint argmax agreement for functional heads.
inline double output_accuracy(const Buffer& out, const Label& label) {
  if (const int* cls = std::get_if<int>(&label)) return predicted_class(out.values) == *cls ? 1.0 : 0.0;
  const auto& y = std::get<MultiCurve>(label);
  std::size_t hit = 0;
  for (std::size_t t = 0; t < out.length; ++t) {
    std::size_t bp = 0, by = 0;
    for (std::size_t c = 1; c < out.channels; ++c) {
      if (out.values[c * out.length + t] > out.values[bp * out.length + t]) bp = c;
      if (y.channel(c)[t] > y.channel(by)[t]) by = c;
    }
    hit += bp == by;
  }
  return static_cast<double>(hit) / static_cast<double>(out.length);
}

// --- gradients -----------------------------------------------------------------

struct BatchGradient {
  double loss = 0.0;
  /// Aligned with Model::parameters().
  std::vector<std::vector<double>> grads;
};

namespace detail {

inline std::size_t common_length(const std::vector<LabeledSample>& batch) {
  if (batch.empty()) throw Error("empty batch");
  const std::size_t T = batch.front().data.length();
  for (const auto& s : batch) {
    if (s.data.length() != T) throw GridMismatchError("samples in one batch must share a grid");
  }
  return T;
}

}  // namespace detail

/// Mean batch loss and its exact gradient w.r.t. every trainable coefficient.
inline BatchGradient backward(const Model& model, const std::vector<LabeledSample>& batch) {
  const Executor ex(model, detail::common_length(batch));
  MaterialGrads acc = ex.zero_grads();
  BatchGradient out;
  for (const auto& s : batch) {
    const Trace tr = ex.forward(to_buffer(s.data));
    const Buffer& o = tr.outputs.back();
    std::vector<double> dp(o.values.size());
    out.loss += cross_entropy_raw(o.values, o.channels, o.length, s.label, dp);
    ex.backward(tr, dp, acc, false);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.grads = ex.project(acc, inv);
  return out;
}

/// Gradient of the sample loss w.r.t. the raw input values (channel-major).
inline std::vector<double> input_gradient(const Model& model, const LabeledSample& sample) {
  const Executor ex(model, sample.data.length());
  MaterialGrads acc = ex.zero_grads();
  const Trace tr = ex.forward(to_buffer(sample.data));
  const Buffer& o = tr.outputs.back();
  std::vector<double> dp(o.values.size());
  cross_entropy_raw(o.values, o.channels, o.length, sample.label, dp);
  return ex.backward(tr, dp, acc, true);
}

inline double sample_loss(const Model& model, const LabeledSample& sample) {
  return cross_entropy(forward(model, sample.data), sample.label);
}

// --- gradient checking -------------------------------------------------------

struct GradCheckEntry {
  std::size_t block = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t coefficients = 100;
  std::uint64_t seed = 0;
  /// Gradients smaller than this are compared absolutely: a central
  /// difference of an O(1) loss with step 1e-5 cannot resolve much below 1e-10.
  double floor = 1e-5;
};

inline double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares `analytic` (aligned with Model::parameters()) with central
/// differences of the sample loss at randomly selected coefficients.
inline GradCheckReport gradient_check_against(Model model, const LabeledSample& sample,
                                              const std::vector<std::vector<double>>& analytic,
                                              const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  rep.tolerance = opt.tolerance;
  auto params = model.parameters();
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i) all.emplace_back(b, i);
  if (all.empty()) return rep;
  Rng rng(opt.seed);
  rng.shuffle(all);
  if (all.size() > opt.coefficients) all.resize(opt.coefficients);
  std::sort(all.begin(), all.end());
  for (auto [b, i] : all) {
    const double orig = params[b][i];
    params[b][i] = orig + opt.step;
    const double lp = sample_loss(model, sample);
    params[b][i] = orig - opt.step;
    const double lm = sample_loss(model, sample);
    params[b][i] = orig;
    GradCheckEntry e{b, i, analytic[b][i], (lp - lm) / (2.0 * opt.step), 0.0};
    e.rel_error = relative_error(e.analytic, e.numeric, opt.floor);
    rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    rep.entries.push_back(e);
  }
  rep.passed = rep.max_rel_error <= opt.tolerance;
  return rep;
}

inline GradCheckReport gradient_check(const Model& model, const LabeledSample& sample,
                                      const GradCheckOptions& opt = {}) {
  const BatchGradient g = backward(model, {sample});
  return gradient_check_against(model, sample, g.grads, opt);
}

/// Same comparison for the gradient w.r.t. the raw input values; exercises
/// parameter-free layers.
inline GradCheckReport input_gradient_check(const Model& model, const LabeledSample& sample,
                                            const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  rep.tolerance = opt.tolerance;
  const std::vector<double> analytic = input_gradient(model, sample);
  std::vector<double> x(sample.data.data().begin(), sample.data.data().end());
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(opt.seed);
  rng.shuffle(idx);
  if (idx.size() > opt.coefficients) idx.resize(opt.coefficients);
  std::sort(idx.begin(), idx.end());
  auto loss_at = [&](const std::vector<double>& v) {
    LabeledSample s{MultiCurve(sample.data.grid(), sample.data.channels(), v), sample.label};
    return sample_loss(model, s);
  };
  for (std::size_t i : idx) {
    const double orig = x[i];
    x[i] = orig + opt.step;
    const double lp = loss_at(x);
    x[i] = orig - opt.step;
    const double lm = loss_at(x);
    x[i] = orig;
    GradCheckEntry e{0, i, analytic[i], (lp - lm) / (2.0 * opt.step), 0.0};
    e.rel_error = relative_error(e.analytic, e.numeric, opt.floor);
    rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    rep.entries.push_back(e);
  }
  rep.passed = rep.max_rel_error <= opt.tolerance;
  return rep;
}

// --- optimizers ----------------------------------------------------------------

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw Error("unknown optimizer '" + s + "'");
}

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 2e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0) throw Error("epochs must be positive");
    if (batch_size == 0) throw Error("batch size must be positive");
    if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
  }
};

class Optimizer {
 public:
  /// `scales` multiplies the step size of each parameter block (see parameter_scales).
  Optimizer(const TrainConfig& cfg, const Model& model, std::vector<double> scales = {})
      : cfg_(cfg), scales_(std::move(scales)) {
    if (scales_.empty()) scales_.assign(model.parameters().size(), 1.0);
    for (const auto& b : model.parameter_values()) {
      m_.emplace_back(b.size(), 0.0);
      v_.emplace_back(b.size(), 0.0);
    }
  }

  void step(std::vector<std::span<double>> params, const std::vector<std::vector<double>>& grads) {
    if (cfg_.learning_rate == 0.0) return;
    ++t_;
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (std::size_t b = 0; b < params.size(); ++b) {
        const double lr = cfg_.learning_rate * scales_[b];
        for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= lr * grads[b][i];
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      const double lr = cfg_.learning_rate * scales_[b];
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double g = grads[b][i];
        m_[b][i] = cfg_.beta1 * m_[b][i] + (1.0 - cfg_.beta1) * g;
        v_[b][i] = cfg_.beta2 * v_[b][i] + (1.0 - cfg_.beta2) * g * g;
        params[b][i] -= lr * (m_[b][i] / c1) / (std::sqrt(v_[b][i] / c2) + cfg_.epsilon);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> scales_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// --- training ------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
};

inline Evaluation evaluate(const Model& model, const std::vector<LabeledSample>& data,
                           bool keep_predictions = false) {
  Evaluation ev;
  if (data.empty()) return ev;
  const Executor ex(model, detail::common_length(data));
  for (const auto& s : data) {
    const Trace tr = ex.forward(to_buffer(s.data));
    const Buffer& o = tr.outputs.back();
    ev.loss += cross_entropy_raw(o.values, o.channels, o.length, s.label, {});
    ev.accuracy += output_accuracy(o, s.label);
    if (keep_predictions) ev.predictions.push_back(to_prediction(o, model.head()));
  }
  ev.loss /= static_cast<double>(data.size());
  ev.accuracy /= static_cast<double>(data.size());
  return ev;
}

/// Mini-batch training. Each epoch shuffles with a generator seeded from
/// `config.seed`; outputs of the leading parameter-free layers are computed
/// once. Train records report the mean loss/accuracy seen during the epoch;
/// when `held_out` is given it is evaluated after every epoch.
inline std::vector<EpochRecord> train(Model& model, const std::vector<LabeledSample>& data,
                                      const TrainConfig& config,
                                      const std::vector<LabeledSample>* held_out = nullptr) {
  config.validate();
  const std::size_t T = detail::common_length(data);
  const std::size_t prefix = model.fixed_prefix();

  std::vector<Buffer> features;
  features.reserve(data.size());
  {
    const Executor ex(model, T);
    for (const auto& s : data) features.push_back(std::move(ex.forward(to_buffer(s.data), 0, prefix).outputs.back()));
  }

  Optimizer opt(config, model, parameter_scales(model, T));
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::vector<EpochRecord> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double loss_sum = 0.0, acc_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      const Executor ex(model, T);
      MaterialGrads acc = ex.zero_grads();
      for (std::size_t q = b0; q < b1; ++q) {
        const std::size_t idx = order[q];
        const Trace tr = ex.forward(features[idx], prefix);
        const Buffer& o = tr.outputs.back();
        std::vector<double> dp(o.values.size());
        loss_sum += cross_entropy_raw(o.values, o.channels, o.length, data[idx].label, dp);
        acc_sum += output_accuracy(o, data[idx].label);
        ex.backward(tr, dp, acc, false);
      }
      opt.step(model.parameters(), ex.project(acc, 1.0 / static_cast<double>(b1 - b0)));
    }
    const double n = static_cast<double>(data.size());
    history.push_back({epoch, "train", loss_sum / n, acc_sum / n});
    if (held_out && !held_out->empty()) {
      const Evaluation ev = evaluate(model, *held_out);
      history.push_back({epoch, "test", ev.loss, ev.accuracy});
    }
  }
  return history;
}

}  // namespace fnn
