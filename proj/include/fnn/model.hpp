// Layer container and the two reference architectures.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fnn/basis.hpp"
#include "fnn/error.hpp"
#include "fnn/layers.hpp"
#include "fnn/random.hpp"
#include "fnn/smoothing.hpp"

namespace fnn {

/// Fixed smoothing layer; emits d*(D+1) channels.
struct LleLayer {
  LLEConfig config;
};

/// Fixed per-channel standardization.
struct StandardizeLayer {};

struct ConvLayer {
  FuncConvParams params;
};

struct DenseLayer {
  FuncDenseParams params;
};

using Layer = std::variant<LleLayer, StandardizeLayer, ConvLayer, DenseLayer>;

enum class HeadKind { scalar, functional };

inline std::string to_string(HeadKind h) { return h == HeadKind::scalar ? "scalar" : "functional"; }

inline HeadKind head_kind_from_string(const std::string& s) {
  if (s == "scalar") return HeadKind::scalar;
  if (s == "functional") return HeadKind::functional;
  throw Error("unknown head kind '" + s + "'");
}

inline bool is_trainable(const Layer& l) {
  return std::holds_alternative<ConvLayer>(l) || std::holds_alternative<DenseLayer>(l);
}

class Model {
 public:
  Model(std::size_t input_channels, std::vector<Layer> layers)
      : input_channels_(input_channels), layers_(std::move(layers)) {
    validate();
  }

  std::size_t input_channels() const noexcept { return input_channels_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  /// Checks channel compatibility between adjacent layers and the head rules.
  void validate() const {
    if (layers_.empty()) throw ShapeMismatchError("model has no layers");
    std::size_t ch = input_channels_;
    bool scalar_seen = false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (scalar_seen) throw ShapeMismatchError("scalar dense layer must be the last layer");
      const auto& l = layers_[i];
      const bool last = i + 1 == layers_.size();
      if (auto* lle = std::get_if<LleLayer>(&l)) {
        lle->config.validate();
        ch = lle->config.output_channels(ch);
      } else if (auto* conv = std::get_if<ConvLayer>(&l)) {
        conv->params.validate();
        if (conv->params.in_channels != ch) throw mismatch(i, ch, conv->params.in_channels);
        if (conv->params.activation == Activation::softmax && !last) {
          throw ShapeMismatchError("softmax is only allowed in the final layer");
        }
        ch = conv->params.out_channels;
      } else if (auto* dense = std::get_if<DenseLayer>(&l)) {
        dense->params.validate();
        if (dense->params.in_channels != ch) throw mismatch(i, ch, dense->params.in_channels);
        if (dense->params.activation == Activation::softmax && !last) {
          throw ShapeMismatchError("softmax is only allowed in the final layer");
        }
        ch = dense->params.out_neurons;
        scalar_seen = !dense->params.functional_output;
      }
    }
    if (final_activation() != Activation::softmax) {
      throw ShapeMismatchError("model must end in a softmax head");
    }
  }

  HeadKind head() const {
    if (auto* d = std::get_if<DenseLayer>(&layers_.back()); d && !d->params.functional_output) {
      return HeadKind::scalar;
    }
    return HeadKind::functional;
  }

  std::size_t n_classes() const {
    const auto& l = layers_.back();
    if (auto* d = std::get_if<DenseLayer>(&l)) return d->params.out_neurons;
    return std::get<ConvLayer>(l).params.out_channels;
  }

  /// Number of leading layers without parameters.
  std::size_t fixed_prefix() const {
    std::size_t n = 0;
    while (n < layers_.size() && !is_trainable(layers_[n])) ++n;
    return n;
  }

  /// Trainable coefficient blocks in layer order; each trainable layer
  /// contributes its weight/filter block followed by its bias block.
  std::vector<std::span<double>> parameters() { return blocks<double>(layers_); }
  std::vector<std::span<const double>> parameters() const { return blocks<const double>(layers_); }

  std::vector<std::vector<double>> parameter_values() const {
    std::vector<std::vector<double>> out;
    for (auto b : parameters()) out.emplace_back(b.begin(), b.end());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto b : parameters()) n += b.size();
    return n;
  }

 private:
  template <typename T, typename Layers>
  static std::vector<std::span<T>> blocks(Layers& layers) {
    std::vector<std::span<T>> out;
    for (auto& l : layers) {
      if (auto* c = std::get_if<ConvLayer>(&l)) {
        out.emplace_back(c->params.filter_coeffs);
        out.emplace_back(c->params.bias_coeffs);
      } else if (auto* d = std::get_if<DenseLayer>(&l)) {
        out.emplace_back(d->params.weight_coeffs);
        out.emplace_back(d->params.bias);
      }
    }
    return out;
  }

  Activation final_activation() const {
    const auto& l = layers_.back();
    if (auto* c = std::get_if<ConvLayer>(&l)) return c->params.activation;
    if (auto* d = std::get_if<DenseLayer>(&l)) return d->params.activation;
    return Activation::identity;
  }

  static ShapeMismatchError mismatch(std::size_t layer, std::size_t have, std::size_t want) {
    return ShapeMismatchError("layer " + std::to_string(layer) + " expects " + std::to_string(want) +
                              " channels but receives " + std::to_string(have));
  }

  std::size_t input_channels_;
  std::vector<Layer> layers_;
};

/// Hyperparameters shared by the two reference architectures: smoothing,
/// standardization, then functional convolutions with ELU, then a softmax head.
struct ArchitectureSpec {
  LLEConfig lle{};
  std::vector<std::size_t> filters{20, 10};
  std::size_t filter_len = 25;
  BasisSpec basis{};
  Activation hidden = Activation::elu;
};

namespace detail {

inline std::vector<Layer> feature_stack(std::size_t input_channels, const ArchitectureSpec& spec,
                                        std::size_t& channels) {
  std::vector<Layer> layers;
  layers.emplace_back(LleLayer{spec.lle});
  layers.emplace_back(StandardizeLayer{});
  channels = spec.lle.output_channels(input_channels);
  for (std::size_t f : spec.filters) {
    layers.emplace_back(ConvLayer{
        FuncConvParams::zeros(channels, f, spec.filter_len, spec.basis, spec.hidden)});
    channels = f;
  }
  return layers;
}

}  // namespace detail

/// LLE -> standardize -> conv... -> scalar dense softmax head.
inline Model make_scalar_fnn(std::size_t input_channels, std::size_t n_classes,
                             const ArchitectureSpec& spec = {}) {
  std::size_t ch = 0;
  auto layers = detail::feature_stack(input_channels, spec, ch);
  layers.emplace_back(
      DenseLayer{FuncDenseParams::zeros(ch, n_classes, spec.basis, Activation::softmax, false)});
  return Model(input_channels, std::move(layers));
}

/// LLE -> standardize -> conv... -> conv head with pointwise softmax.
inline Model make_functional_fnn(std::size_t input_channels, std::size_t n_classes,
                                 const ArchitectureSpec& spec = {}) {
  std::size_t ch = 0;
  auto layers = detail::feature_stack(input_channels, spec, ch);
  layers.emplace_back(ConvLayer{
      FuncConvParams::zeros(ch, n_classes, spec.filter_len, spec.basis, Activation::softmax)});
  return Model(input_channels, std::move(layers));
}

namespace detail {

/// Mean over the evaluation points of sum_i phi_i(p)^2.
inline double basis_energy(const BasisMatrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.count(); ++i)
    for (double v : m.row(i)) s += v * v;
  return s / static_cast<double>(m.points());
}

}  // namespace detail

/// Natural scale of every block of Model::parameters(): the uniform
/// initialization limit `a` for weight/filter blocks, 1 for bias blocks.
///
/// `a` gives the discretized operator Glorot variance 2 / (fan_in + fan_out):
/// a conv filter acts through the weights u(o)/T on in*L inputs, a scalar
/// dense neuron through w(t)/T on in*T inputs, and a functional dense neuron
/// through w(t) on `in` inputs. The basis energy converts coefficient
/// variance into the variance of the expanded function. `length` is the grid
/// length T the model runs on.
inline std::vector<double> parameter_scales(const Model& model, std::size_t length) {
  const Grid grid(length);
  const auto T = static_cast<double>(length);
  std::vector<double> out;
  for (const auto& l : model.layers()) {
    if (auto* c = std::get_if<ConvLayer>(&l)) {
      const auto& p = c->params;
      const double fans =
          static_cast<double>(p.in_channels + p.out_channels) * static_cast<double>(p.filter_len);
      const double energy = detail::basis_energy(BasisMatrix::on_filter(p.basis, p.filter_len));
      out.push_back(T * std::sqrt(6.0 / fans / energy));
      out.push_back(1.0);
    } else if (auto* d = std::get_if<DenseLayer>(&l)) {
      const auto& p = d->params;
      const double energy = detail::basis_energy(BasisMatrix::on_grid(p.basis, grid));
      const auto in = static_cast<double>(p.in_channels), n = static_cast<double>(p.out_neurons);
      out.push_back(p.functional_output ? std::sqrt(6.0 / (in + n) / energy)
                                        : T * std::sqrt(6.0 / (in * T + n) / energy));
      out.push_back(1.0);
    }
  }
  return out;
}

/// Weight/filter coefficients ~ U(-a, a) with a from parameter_scales; biases zero.
inline void initialize_parameters(Model& model, std::uint64_t seed, std::size_t length = 250) {
  Rng rng(seed);
  const auto scales = parameter_scales(model, length);
  auto blocks = model.parameters();
  for (std::size_t b = 0; b < blocks.size(); b += 2) {
    for (double& v : blocks[b]) v = rng.uniform(-scales[b], scales[b]);
    for (double& v : blocks[b + 1]) v = 0.0;
  }
}

}  // namespace fnn
