// Deterministic inputs shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sigscat/evaluation.hpp"
#include "sigscat/random.hpp"
#include "sigscat/tensor.hpp"

namespace fixture {

inline sigscat::Tensor<double> noise_image(std::size_t h, std::size_t w, sigscat::Rng& rng) {
  sigscat::Tensor<double> t(sigscat::Shape{h, w});
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

/// Sum of twelve periodic Gaussian bumps of width `sigma` pixels.
inline sigscat::Tensor<double> smooth_field(std::size_t h, std::size_t w, double sigma, sigscat::Rng& rng) {
  sigscat::Tensor<double> t(sigscat::Shape{h, w});
  const double H = static_cast<double>(h), W = static_cast<double>(w);
  for (int k = 0; k < 12; ++k) {
    const double cy = rng.uniform(0.0, H), cx = rng.uniform(0.0, W), amp = rng.uniform(0.2, 1.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = std::remainder(y - cy, H), dx = std::remainder(x - cx, W);
        t[y * w + x] += amp * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      }
    }
  }
  return t;
}

/// Cyclic shift right by `dx` columns.
inline sigscat::Tensor<double> shift_columns(const sigscat::Tensor<double>& src, std::size_t dx) {
  const std::size_t h = src.dim(0), w = src.dim(1);
  sigscat::Tensor<double> out(src.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + (x + dx) % w] = src[y * w + x];
  }
  return out;
}

/// `n` scored pairs with both classes present. Half the sets use 11 score
/// levels so ties are common; genuine scores are biased downward.
inline std::vector<sigscat::ScoredPair> random_scores(sigscat::Rng& rng, std::size_t n) {
  using sigscat::scored;
  const std::size_t levels = rng.below(2) ? 11 : 100000;
  std::vector<sigscat::ScoredPair> out;
  out.push_back(scored(true, static_cast<double>(rng.below(levels)) / (levels - 1)));
  out.push_back(scored(false, static_cast<double>(rng.below(levels)) / (levels - 1)));
  const double bias = rng.uniform(0.0, 0.3);
  while (out.size() < n) {
    const bool g = rng.below(2) == 0;
    double s = static_cast<double>(rng.below(levels)) / (levels - 1);
    s = std::clamp(g ? s - bias : s + bias, 0.0, 1.0);
    out.push_back(scored(g, s));
  }
  return out;
}

}  // namespace fixture
