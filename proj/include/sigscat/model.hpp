#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sigscat/autograd.hpp"
#include "sigscat/errors.hpp"
#include "sigscat/ops.hpp"
#include "sigscat/random.hpp"
#include "sigscat/scattering.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

enum class Padding { valid, same };

inline std::string to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

inline Padding parse_padding(std::string_view s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw ConfigError("padding must be 'same' or 'valid', got '" + std::string(s) + "'");
}

/// Architecture of one Siamese branch.
///
/// The default spatial plan (same/valid/same/same padding, 2x2 ceil-mode
/// pooling after blocks 1-3) yields 249,200 parameters on the default
/// 81x45x75 scattering output.
struct ModelConfig {
  ScatteringConfig scattering;
  std::vector<int> conv_filters{16, 16, 32, 32};
  int kernel = 3;
  std::vector<bool> pool_after_block{true, true, true, false};
  std::vector<Padding> padding{Padding::same, Padding::valid, Padding::same, Padding::same};
  int pool_window = 2;
  bool pool_ceil = true;
  int embedding_dim = 128;
  bool normalize_embeddings = true;

  void validate() const {
    scattering.validate();
    if (conv_filters.empty()) throw ConfigError("conv_filters must list at least one block");
    for (int f : conv_filters) {
      if (f < 1) throw ConfigError("conv_filters entries must be positive");
    }
    if (pool_after_block.size() != conv_filters.size()) {
      throw ConfigError("pool_after_block needs one flag per conv block (" +
                        std::to_string(conv_filters.size()) + ")");
    }
    if (padding.size() != conv_filters.size()) {
      throw ConfigError("padding needs one entry per conv block (" +
                        std::to_string(conv_filters.size()) + ")");
    }
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be a positive odd integer");
    if (pool_window < 1) throw ConfigError("pool_window must be positive");
    if (embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
  }

  /// 16,16,32,32 filters of 3x3 and a 128-d embedding.
  bool matches_reference_architecture() const {
    return conv_filters == std::vector<int>{16, 16, 32, 32} && kernel == 3 &&
           embedding_dim == 128;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One trainable layer with its parameter shapes and output extent.
struct LayerInfo {
  std::string name;
  Shape weight_shape;
  Shape bias_shape;
  Shape output_shape;
  std::size_t parameters = 0;
};

/// Walks the architecture and returns every trainable layer in order
/// (conv1..convN, fc). Throws ConfigError when a block no longer fits.
inline std::vector<LayerInfo> layer_plan(const ModelConfig& config) {
  config.validate();
  const auto lay = output_layout(config.scattering);
  std::size_t c = lay.channels, h = lay.height, w = lay.width;
  const auto k = static_cast<std::size_t>(config.kernel);
  std::vector<LayerInfo> plan;
  for (std::size_t b = 0; b < config.conv_filters.size(); ++b) {
    const auto f = static_cast<std::size_t>(config.conv_filters[b]);
    const std::size_t pad = config.padding[b] == Padding::same ? k / 2 : 0;
    if (h + 2 * pad < k || w + 2 * pad < k) {
      throw ConfigError("conv" + std::to_string(b + 1) + " kernel does not fit its " +
                        std::to_string(h) + "x" + std::to_string(w) + " input");
    }
    h = conv_extent(h, k, 1, pad);
    w = conv_extent(w, k, 1, pad);
    LayerInfo li{"conv" + std::to_string(b + 1), Shape{f, c, k, k}, Shape{f}, {}, f * c * k * k + f};
    if (config.pool_after_block[b]) {
      const auto pw = static_cast<std::size_t>(config.pool_window);
      if (pw > h || pw > w) {
        throw ConfigError("pool after conv" + std::to_string(b + 1) + " does not fit its " +
                          std::to_string(h) + "x" + std::to_string(w) + " input");
      }
      h = pool_extent(h, pw, pw, config.pool_ceil);
      w = pool_extent(w, pw, pw, config.pool_ceil);
    }
    li.output_shape = Shape{f, h, w};
    plan.push_back(std::move(li));
    c = f;
  }
  const std::size_t flat = c * h * w;
  const auto e = static_cast<std::size_t>(config.embedding_dim);
  plan.push_back({"fc", Shape{e, flat}, Shape{e}, Shape{e}, e * flat + e});
  return plan;
}

/// Every trainable tensor of one Siamese branch. Both branches embed with
/// the same instance, so weight sharing is structural.
template <class T>
class ModelWeights {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelWeights(ModelConfig config, std::vector<Parameter<T>> params,
               std::uint32_t version = kFormatVersion)
      : config_(std::move(config)), params_(std::move(params)), version_(version) {
    const auto plan = layer_plan(config_);
    if (params_.size() != 2 * plan.size()) {
      throw ShapeError("model expects " + std::to_string(2 * plan.size()) +
                       " parameter tensors, got " + std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < plan.size(); ++i) {
      check(params_[2 * i], plan[i].name + ".weight", plan[i].weight_shape);
      check(params_[2 * i + 1], plan[i].name + ".bias", plan[i].bias_shape);
    }
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::uint32_t version() const noexcept { return version_; }
  std::span<Parameter<T>> parameters() noexcept { return params_; }
  std::span<const Parameter<T>> parameters() const noexcept { return params_; }

  const Parameter<T>& get(std::string_view name) const {
    for (const auto& p : params_) {
      if (p.name == name) return p;
    }
    throw Error("no parameter named '" + std::string(name) + "'");
  }
  Parameter<T>& get(std::string_view name) {
    return const_cast<Parameter<T>&>(std::as_const(*this).get(name));
  }

  template <class U>
  ModelWeights<U> cast() const {
    std::vector<Parameter<U>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back({p.name, p.tensor.template cast<U>()});
    return ModelWeights<U>(config_, std::move(out), version_);
  }

  friend bool operator==(const ModelWeights& a, const ModelWeights& b) {
    if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name || !(a.params_[i].tensor == b.params_[i].tensor)) {
        return false;
      }
    }
    return true;
  }

 private:
  static void check(const Parameter<T>& p, const std::string& name, const Shape& shape) {
    if (p.name != name) {
      throw ShapeError("expected parameter '" + name + "', found '" + p.name + "'");
    }
    if (p.tensor.shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + to_string(p.tensor.shape()) +
                       ", config requires " + to_string(shape));
    }
  }

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::uint32_t version_;
};

/// He-style uniform init U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
template <class T = float>
ModelWeights<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  const auto plan = layer_plan(config);
  Rng rng(seed);
  std::vector<Parameter<T>> params;
  for (const auto& layer : plan) {
    Tensor<T> w(layer.weight_shape);
    const std::size_t fan_in = w.size() / layer.weight_shape[0];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    params.push_back({layer.name + ".weight", std::move(w)});
    params.push_back({layer.name + ".bias", Tensor<T>(layer.bias_shape)});
  }
  return ModelWeights<T>(config, std::move(params));
}

template <class T>
std::size_t count_parameters(const ModelWeights<T>& weights) {
  std::size_t n = 0;
  for (const auto& p : weights.parameters()) n += p.tensor.size();
  return n;
}

/// Parameters bound onto a tape, in layer order.
struct BoundModel {
  std::vector<Var> weight, bias;
};

/// Binds every parameter read-only; gradients stay on the tape.
template <class T>
BoundModel bind_model(Tape<T>& tape, const ModelWeights<T>& weights) {
  BoundModel b;
  const auto params = weights.parameters();
  for (std::size_t i = 0; i < params.size(); i += 2) {
    b.weight.push_back(tape.parameter(params[i].tensor));
    b.bias.push_back(tape.parameter(params[i + 1].tensor));
  }
  return b;
}

/// Binds every parameter so backward() writes into the tensors' grad.
template <class T>
BoundModel bind_model_writable(Tape<T>& tape, ModelWeights<T>& weights) {
  BoundModel b;
  auto params = weights.parameters();
  for (std::size_t i = 0; i < params.size(); i += 2) {
    b.weight.push_back(tape.parameter(params[i].tensor));
    b.bias.push_back(tape.parameter(params[i + 1].tensor));
  }
  return b;
}

/// Conv blocks (conv, relu, optional pool) -> flatten -> dense ->
/// optional L2 normalization, applied to a scattering feature node.
template <class T>
Var forward(Tape<T>& tape, const ModelConfig& config, const BoundModel& bound, Var features) {
  const auto k = static_cast<std::size_t>(config.kernel);
  Var x = features;
  for (std::size_t b = 0; b < config.conv_filters.size(); ++b) {
    const std::size_t pad = config.padding[b] == Padding::same ? k / 2 : 0;
    x = conv2d(tape, x, bound.weight[b], bound.bias[b], 1, pad);
    x = relu(tape, x);
    if (config.pool_after_block[b]) {
      const auto pw = static_cast<std::size_t>(config.pool_window);
      x = maxpool2d(tape, x, pw, pw, config.pool_ceil);
    }
  }
  x = flatten(tape, x);
  x = dense(tape, x, bound.weight.back(), bound.bias.back());
  if (config.normalize_embeddings) x = l2_normalize(tape, x, 1e-12);
  return x;
}

struct Embedding {
  std::vector<float> values;
  std::string source_id;
};

/// Embeds precomputed scattering coefficients (channels x h x w).
template <class T>
Embedding embed_features(const Tensor<T>& features, const ModelWeights<T>& weights,
                         std::string source_id = {}) {
  const auto lay = output_layout(weights.config().scattering);
  if (features.shape() != Shape{lay.channels, lay.height, lay.width}) {
    throw ShapeError("features " + to_string(features.shape()) +
                     " do not match the model's scattering layout");
  }
  Tape<T> tape;
  const BoundModel bound = bind_model(tape, weights);
  Var out = forward(tape, weights.config(), bound, tape.constant(features));
  Embedding e;
  const auto v = tape.value(out).data();
  e.values.assign(v.begin(), v.end());
  e.source_id = std::move(source_id);
  return e;
}

/// Scattering followed by the embedding network. `image` is H x W grayscale
/// in [0, 1] with the extents of the model's scattering config.
template <class T, class P>
Embedding embed(const Tensor<P>& image, const ModelWeights<T>& weights, const FilterBank& bank,
                std::string source_id = {}) {
  const auto& sc = weights.config().scattering;
  if (!(bank.config() == sc)) throw ConfigError("filter bank does not match the model's scattering config");
  if (image.rank() != 2 || image.dim(0) != static_cast<std::size_t>(sc.input_height) ||
      image.dim(1) != static_cast<std::size_t>(sc.input_width)) {
    throw ShapeError("image " + to_string(image.shape()) + " must be " +
                     std::to_string(sc.input_height) + "x" + std::to_string(sc.input_width));
  }
  if (!image.all_finite()) throw NumericError("image contains non-finite pixels");
  const auto s = scatter(image.template cast<double>(), bank);
  return embed_features(s.coefficients.template cast<T>(), weights, std::move(source_id));
}

/// Raw Euclidean distance between two embeddings.
inline double raw_distance(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size()) {
    throw ShapeError("embedding lengths " + std::to_string(a.values.size()) + " and " +
                     std::to_string(b.values.size()) + " differ");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

/// Similarity score in [0, 1]: raw distance halved (unit-norm embeddings lie
/// at most 2 apart). Lower means more similar.
inline double distance(const Embedding& a, const Embedding& b) {
  return std::clamp(raw_distance(a, b) / 2.0, 0.0, 1.0);
}

}  // namespace sigscat
