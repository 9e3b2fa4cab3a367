#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sigscat/dataset.hpp"
#include "sigscat/errors.hpp"
#include "sigscat/random.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

/// Knobs of the procedural signature generator. Distances are in pixels of
/// the 180x300 canvas.
struct SynthConfig {
  int height = 180;
  int width = 300;
  double genuine_shift = 3.0;     ///< max global translation of a genuine sample
  double genuine_width = 1.0;     ///< max stroke-width change of a genuine sample
  double genuine_elastic = 1.0;   ///< std dev of per-control-point noise
  double forgery_elastic = 7.0;   ///< std dev of the forger's control-point offset
  double forgery_slant = 0.25;    ///< max shear change (dx per dy) of a forgery
};

struct Stroke {
  std::vector<double> x, y;   // control points
  double width = 2.5;
};

/// A writer's latent signature: a handful of strokes running left to right.
using Glyph = std::vector<Stroke>;

namespace detail {

inline Glyph random_glyph(Rng& rng, const SynthConfig& c) {
  Glyph g;
  const int strokes = 3 + static_cast<int>(rng.below(3));
  const double left = 25.0, right = c.width - 25.0;
  const double span = (right - left) / strokes;
  for (int s = 0; s < strokes; ++s) {
    Stroke st;
    st.width = rng.uniform(2.0, 3.5);
    const int points = 5 + static_cast<int>(rng.below(4));
    const double x0 = left + s * span;
    for (int p = 0; p < points; ++p) {
      const double t = static_cast<double>(p) / (points - 1);
      st.x.push_back(x0 + t * span * 1.1 + rng.uniform(-12.0, 12.0));
      st.y.push_back(c.height * 0.5 + rng.uniform(-55.0, 55.0));
    }
    g.push_back(std::move(st));
  }
  return g;
}

/// Shifts every control point by N(0, sigma), then shears about the
/// vertical center and translates.
inline Glyph perturb(const Glyph& g, Rng& rng, double sigma, double shear, double dx, double dy,
                     double dwidth, const SynthConfig& c) {
  Glyph out = g;
  const double cy = c.height * 0.5;
  for (auto& st : out) {
    for (std::size_t i = 0; i < st.x.size(); ++i) {
      const double nx = sigma * rng.normal(), ny = sigma * rng.normal();
      st.x[i] += nx + shear * (cy - st.y[i]) + dx;
      st.y[i] += ny + dy;
    }
    st.width = std::max(1.0, st.width + dwidth);
  }
  return out;
}

// Uniform Catmull-Rom segment between p1 and p2.
inline double catmull(double p0, double p1, double p2, double p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * (2 * p1 + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t2 +
                (-p0 + 3 * p1 - 3 * p2 + p3) * t3);
}

}  // namespace detail

/// Renders dark ink on a white page with anti-aliased round pen stamps.
inline Tensor<float> render_glyph(const Glyph& g, int height, int width) {
  Tensor<float> img(Shape{static_cast<std::size_t>(height), static_cast<std::size_t>(width)}, 1.0f);
  auto stamp = [&](double cx, double cy, double r) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + r + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        const double ink = std::clamp(r + 0.5 - d, 0.0, 1.0);
        float& px = img[static_cast<std::size_t>(y) * width + x];
        px = std::min(px, static_cast<float>(1.0 - ink));
      }
    }
  };
  for (const auto& st : g) {
    const std::size_t n = st.x.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t a = i == 0 ? 0 : i - 1, d = std::min(n - 1, i + 2);
      const double len = std::hypot(st.x[i + 1] - st.x[i], st.y[i + 1] - st.y[i]);
      const int steps = std::max(2, static_cast<int>(len * 2));
      for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        stamp(detail::catmull(st.x[a], st.x[i], st.x[i + 1], st.x[d], t),
              detail::catmull(st.y[a], st.y[i], st.y[i + 1], st.y[d], t), st.width * 0.5);
      }
    }
  }
  return img;
}

/// Procedural desk-scale dataset. Writer w is named "w00", "w01", ...;
/// images are "<writer>/genuine_NN" and "<writer>/forged_NN". Each forgery
/// comes from its own forger latent (a large control-point offset plus a
/// slant and width change of the writer's glyph), then gets the same small
/// jitter a genuine sample does.
inline SignatureCatalog synthesize_dataset(int writers, int genuine_per_writer, int forged_per_writer,
                                           std::uint64_t seed, const SynthConfig& c = {}) {
  if (writers < 1 || genuine_per_writer < 1 || forged_per_writer < 1) {
    throw ConfigError("synthesize_dataset: writers and per-writer counts must be >= 1");
  }
  Rng root(seed);
  std::vector<SignatureImage> images;
  // Draws are sequenced explicitly: argument evaluation order is unspecified.
  auto jitter = [&](const Glyph& g, Rng& rng) {
    const double dx = rng.uniform(-c.genuine_shift, c.genuine_shift);
    const double dy = rng.uniform(-c.genuine_shift, c.genuine_shift);
    const double dw = rng.uniform(-c.genuine_width, c.genuine_width);
    return detail::perturb(g, rng, c.genuine_elastic, 0.0, dx, dy, dw, c);
  };
  auto add = [&](const std::string& writer, const std::string& name, Label label, const Glyph& g) {
    images.push_back({writer + "/" + name, writer, label, {},
                      std::make_shared<const Tensor<float>>(render_glyph(g, c.height, c.width))});
  };
  for (int w = 0; w < writers; ++w) {
    Rng rng = root.fork(static_cast<std::uint64_t>(w));
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%02d", w);
    const std::string writer = buf;
    const Glyph proto = detail::random_glyph(rng, c);
    for (int i = 0; i < genuine_per_writer; ++i) {
      std::snprintf(buf, sizeof buf, "genuine_%02d", i);
      add(writer, buf, Label::genuine, jitter(proto, rng));
    }
    for (int i = 0; i < forged_per_writer; ++i) {
      const double shear = rng.uniform(-c.forgery_slant, c.forgery_slant);
      const double dw = rng.uniform(-1.0, 1.0);
      const Glyph forger = detail::perturb(proto, rng, c.forgery_elastic, shear, 0.0, 0.0, dw, c);
      std::snprintf(buf, sizeof buf, "forged_%02d", i);
      add(writer, buf, Label::forged, jitter(forger, rng));
    }
  }
  return SignatureCatalog(std::move(images), "synthetic:v1:seed=" + std::to_string(seed));
}

}  // namespace sigscat
