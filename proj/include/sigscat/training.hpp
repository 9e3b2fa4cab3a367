#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sigscat/autograd.hpp"
#include "sigscat/dataset.hpp"
#include "sigscat/errors.hpp"
#include "sigscat/model.hpp"
#include "sigscat/ops.hpp"
#include "sigscat/parallel.hpp"
#include "sigscat/random.hpp"
#include "sigscat/scattering.hpp"

namespace sigscat {

struct Triplet {
  ImageRef anchor = 0;
  ImageRef positive = 0;
  ImageRef negative = 0;
  bool forgery_negative = false;   ///< negative is a forgery of the anchor's writer
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TrainConfig {
  double learning_rate = 0.0005;
  int batch_size = 32;
  int epochs = 100;
  double margin = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double negative_mix = 0.5;       ///< probability of a forgery negative
  int triplets_per_epoch = 0;      ///< 0: one per genuine train signature
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("train.learning_rate must be a finite value >= 0");
    }
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (!(margin >= 0.0)) throw ConfigError("train.margin must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
    if (!(negative_mix >= 0.0 && negative_mix <= 1.0)) {
      throw ConfigError("train.negative_mix must be in [0, 1]");
    }
    if (triplets_per_epoch < 0) throw ConfigError("train.triplets_per_epoch must be >= 0");
    if (threads < 1) throw ConfigError("run.threads must be >= 1");
  }
};

/// Draws `count` triplets from the writers of `split`. Writers with fewer
/// than two genuine signatures are skipped. A forgery negative is chosen
/// with probability `negative_mix`; when one kind of negative does not
/// exist for the anchor's writer the other kind is used.
inline std::vector<Triplet> sample_triplets(const SignatureCatalog& catalog, Split split,
                                            std::size_t count, double negative_mix,
                                            std::uint64_t seed) {
  if (!(negative_mix >= 0.0 && negative_mix <= 1.0)) {
    throw ConfigError("negative_mix must be in [0, 1]");
  }
  const auto writers = catalog.writers_in(split);
  std::vector<std::string> eligible;
  for (const auto& w : writers) {
    if (catalog.writer(w).genuine.size() >= 2) eligible.push_back(w);
  }
  if (eligible.empty()) {
    throw Error("no writer in the " + to_string(split) + " split has two genuine signatures");
  }
  // Other-writer negatives are drawn uniformly over genuine images.
  std::vector<std::pair<std::size_t, ImageRef>> genuine_pool;   // (writer index, image)
  for (std::size_t w = 0; w < writers.size(); ++w) {
    for (ImageRef r : catalog.writer(writers[w]).genuine) genuine_pool.emplace_back(w, r);
  }

  Rng rng(seed);
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::string& w = eligible[rng.below(eligible.size())];
    const auto& e = catalog.writer(w);
    const std::size_t ai = rng.below(e.genuine.size());
    std::size_t pi = rng.below(e.genuine.size() - 1);
    if (pi >= ai) ++pi;
    Triplet t{e.genuine[ai], e.genuine[pi], 0, false};

    const std::size_t own_genuine = e.genuine.size();
    const bool have_other = genuine_pool.size() > own_genuine;
    const bool have_forged = !e.forged.empty();
    if (!have_other && !have_forged) {
      throw Error("writer " + w + " has no forgeries and there are no other writers");
    }
    bool forged = rng.uniform() < negative_mix;
    if (forged && !have_forged) forged = false;
    if (!forged && !have_other) forged = true;
    if (forged) {
      t.negative = e.forged[rng.below(e.forged.size())];
      t.forgery_negative = true;
    } else {
      // Rejection over the pool; the anchor writer's share is below one.
      while (true) {
        const auto& cand = genuine_pool[rng.below(genuine_pool.size())];
        if (writers[cand.first] != w) {
          t.negative = cand.second;
          break;
        }
      }
    }
    out.push_back(t);
  }
  return out;
}

/// Adam moments, one buffer per parameter tensor, plus the step count.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update using each parameter tensor's grad().
template <class T>
void adam_step(ModelWeights<T>& weights, AdamState& state, const TrainConfig& config) {
  auto params = weights.parameters();
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error("optimizer state does not match the model");
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw Error("parameter '" + p.name + "' has no gradient");
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    const auto g = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      w[k] = static_cast<T>(w[k] - config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon));
    }
  }
}

struct EpochStats {
  int epoch = 0;              ///< 1-based
  double mean_loss = 0.0;
  double active_fraction = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double feature_seconds = 0.0;   ///< scattering precompute
  double wall_seconds = 0.0;
  std::string checkpoint_path;    ///< set by callers that save the weights

  /// Line-oriented log: one "epoch mean_loss active_fraction" line each.
  std::string log() const {
    std::string s = "epoch\tmean_loss\tactive_fraction\tseconds\n";
    char buf[128];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.6f\t%.3f\n", e.epoch, e.mean_loss,
                    e.active_fraction, e.seconds);
      s += buf;
    }
    return s;
  }
};

struct TrainResult {
  ModelWeights<float> weights;
  TrainReport report;
};

/// Scattering coefficients of every listed image, computed once.
inline std::map<ImageRef, Tensor<float>> precompute_features(const SignatureCatalog& catalog,
                                                             const std::vector<ImageRef>& refs,
                                                             const FilterBank& bank, int threads) {
  std::vector<std::optional<Tensor<float>>> slots(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t i) {
    const auto& im = catalog.image(refs[i]);
    slots[i] = scatter(im.pixels->cast<double>(), bank).coefficients.cast<float>();
  });
  std::map<ImageRef, Tensor<float>> out;
  for (std::size_t i = 0; i < refs.size(); ++i) out.emplace(refs[i], std::move(*slots[i]));
  return out;
}

namespace detail {

struct ChunkResult {
  std::vector<std::vector<float>> grads;   // per parameter, already scaled by 1/batch
  double loss_sum = 0.0;
  std::size_t active = 0;
};

// Loss and gradient of one contiguous slice of a batch on its own tape.
inline ChunkResult run_chunk(const ModelWeights<float>& weights,
                             const std::map<ImageRef, Tensor<float>>& features,
                             std::span<const Triplet> triplets, std::size_t batch, double margin) {
  Tape<float> tape;
  const BoundModel bound = bind_model(tape, weights);
  std::map<ImageRef, Var> emb;
  auto embedding = [&](ImageRef r) {
    auto it = emb.find(r);
    if (it != emb.end()) return it->second;
    Var out = forward(tape, weights.config(), bound, tape.constant(features.at(r)));
    emb.emplace(r, out);
    return out;
  };
  std::vector<Var> losses;
  ChunkResult res;
  for (const auto& t : triplets) {
    Var a = embedding(t.anchor), p = embedding(t.positive), n = embedding(t.negative);
    Var l = triplet_loss(tape, a, p, n, margin);
    const double v = tape.value(l)[0];
    res.loss_sum += v;
    res.active += v > 0.0;
    losses.push_back(l);
  }
  Var total = scale(tape, mean_of(tape, std::span<const Var>(losses)),
                    static_cast<double>(losses.size()) / static_cast<double>(batch));
  const auto params = weights.parameters();
  if (res.active > 0) tape.backward(total);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Var v = i % 2 == 0 ? bound.weight[i / 2] : bound.bias[i / 2];
    res.grads.push_back(res.active > 0 ? tape.grad(v) : std::vector<float>(params[i].tensor.size(), 0.0f));
  }
  return res;
}

}  // namespace detail

/// Triplet training of a fresh model. Each epoch resamples its triplets
/// and walks them in batches; a batch is split into `threads` contiguous
/// chunks whose gradients are summed in chunk order, so a fixed seed and
/// thread count reproduce the run exactly. `on_epoch` is called after each
/// epoch.
inline TrainResult train(const SignatureCatalog& catalog, const ModelConfig& model_config,
                         const TrainConfig& config,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  config.validate();
  model_config.validate();
  if (catalog.empty()) throw Error("cannot train on an empty catalog");
  const auto writers = catalog.writers_in(Split::train);
  if (writers.empty()) throw Error("catalog has no train split");

  std::vector<ImageRef> refs;
  std::size_t genuine = 0;
  for (const auto& w : writers) {
    const auto& e = catalog.writer(w);
    refs.insert(refs.end(), e.genuine.begin(), e.genuine.end());
    refs.insert(refs.end(), e.forged.begin(), e.forged.end());
    genuine += e.genuine.size();
  }
  // Validates the sampling preconditions before any expensive work.
  (void)sample_triplets(catalog, Split::train, 1, config.negative_mix, config.seed);

  TrainResult result{init_model<float>(model_config, config.seed), {}};
  if (config.epochs == 0) {
    result.report.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
    return result;
  }
  const FilterBank bank(model_config.scattering);
  const auto features = precompute_features(catalog, refs, bank, config.threads);
  result.report.feature_seconds = std::chrono::duration<double>(clock::now() - start).count();

  const std::size_t per_epoch =
      config.triplets_per_epoch > 0 ? static_cast<std::size_t>(config.triplets_per_epoch) : genuine;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  Rng sampler(config.seed ^ 0x5eed'7219'0b1e'77a5ULL);
  AdamState state;
  auto& weights = result.weights;
  auto params = weights.parameters();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = clock::now();
    const auto triplets = sample_triplets(catalog, Split::train, per_epoch, config.negative_mix,
                                          sampler.fork(static_cast<std::uint64_t>(epoch)).next_u64());
    double loss_sum = 0.0;
    std::size_t active = 0;
    for (std::size_t b0 = 0; b0 < triplets.size(); b0 += batch) {
      const std::size_t bn = std::min(batch, triplets.size() - b0);
      const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(config.threads), bn);
      std::vector<detail::ChunkResult> parts(chunks);
      parallel_for(chunks, config.threads, [&](std::size_t c) {
        const std::size_t lo = b0 + c * bn / chunks, hi = b0 + (c + 1) * bn / chunks;
        parts[c] = detail::run_chunk(weights, features,
                                     std::span<const Triplet>(triplets).subspan(lo, hi - lo), bn,
                                     config.margin);
      });
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].tensor.zero_grad();
        auto g = params[i].tensor.grad();
        for (const auto& part : parts) {
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += part.grads[i][k];
        }
      }
      for (const auto& part : parts) {
        loss_sum += part.loss_sum;
        active += part.active;
      }
      if (!std::isfinite(loss_sum)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
      }
      adam_step(weights, state, config);
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(triplets.size()),
                     static_cast<double>(active) / static_cast<double>(triplets.size()),
                     std::chrono::duration<double>(clock::now() - t0).count()};
    result.report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  for (auto& p : params) p.tensor.clear_grad();
  result.report.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return result;
}

}  // namespace sigscat
