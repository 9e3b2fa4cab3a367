#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sigscat/autograd.hpp"
#include "sigscat/errors.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

// Differentiable operations on a Tape. Every op validates extents, records
// its result and, when an input requires grad, a closure that scatters the
// upstream gradient into its inputs' buffers. Reductions accumulate in double.

namespace detail {

inline std::size_t pooled_extent(std::size_t n, std::size_t window, std::size_t stride,
                                 bool ceil_mode) {
  const std::size_t span = n - window;
  std::size_t out = (ceil_mode ? (span + stride - 1) / stride : span / stride) + 1;
  // A ceil-mode window must start inside the input.
  if (ceil_mode && (out - 1) * stride >= n) --out;
  return out;
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + to_string(s));
  }
}

// Dot product with eight independent partial sums so the loop vectorizes
// without reassociation flags; the summation order is fixed for a given n.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T lanes[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  }
  for (; i < n; ++i) lanes[0] += a[i] * b[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

}  // namespace detail

/// Output extent of a convolution along one axis.
inline std::size_t conv_extent(std::size_t n, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  return (n + 2 * padding - kernel) / stride + 1;
}

/// Output extent of a max-pool along one axis.
inline std::size_t pool_extent(std::size_t n, std::size_t window, std::size_t stride,
                               bool ceil_mode = false) {
  return detail::pooled_extent(n, window, stride, ceil_mode);
}

/// Cross-correlation of a C×H×W input with F×C×kh×kw filters plus bias.
template <class T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, std::size_t stride = 1,
           std::size_t padding = 0) {
  const Shape& xs = tape.shape(input);
  const Shape& ws = tape.shape(weight);
  const Shape& bs = tape.shape(bias);
  detail::require_rank(xs, 3, "conv2d", "input");
  detail::require_rank(ws, 4, "conv2d", "weight");
  detail::require_rank(bs, 1, "conv2d", "bias");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t C = xs[0], H = xs[1], W = xs[2];
  const std::size_t F = ws[0], KH = ws[2], KW = ws[3];
  if (ws[1] != C) {
    throw ShapeError("conv2d: input has " + std::to_string(C) +
                     " channels but weight expects " + std::to_string(ws[1]) +
                     " (weight " + to_string(ws) + ")");
  }
  if (bs[0] != F) {
    throw ShapeError("conv2d: bias length " + std::to_string(bs[0]) +
                     " does not match filter count " + std::to_string(F));
  }
  if (KH > H + 2 * padding || KW > W + 2 * padding) {
    throw ShapeError("conv2d: kernel " + std::to_string(KH) + "x" + std::to_string(KW) +
                     " larger than padded input " + to_string(xs));
  }
  const std::size_t OH = conv_extent(H, KH, stride, padding);
  const std::size_t OW = conv_extent(W, KW, stride, padding);
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  const auto str = static_cast<std::ptrdiff_t>(stride);

  // Valid output column range [lo, hi) for kernel column kx.
  auto col_range = [=](std::size_t kx) {
    std::ptrdiff_t lo = 0, hi = static_cast<std::ptrdiff_t>(OW);
    const auto off = static_cast<std::ptrdiff_t>(kx) - pad;
    while (lo < hi && lo * str + off < 0) ++lo;
    while (hi > lo && (hi - 1) * str + off >= static_cast<std::ptrdiff_t>(W)) --hi;
    return std::pair<std::ptrdiff_t, std::ptrdiff_t>{lo, hi};
  };

  const auto x = tape.value(input).data();
  const auto w = tape.value(weight).data();
  const auto b = tape.value(bias).data();
  Tensor<T> out(Shape{F, OH, OW});
  auto o = out.data();
  for (std::size_t f = 0; f < F; ++f) {
    T* of = o.data() + f * OH * OW;
    std::fill(of, of + OH * OW, b[f]);
    for (std::size_t c = 0; c < C; ++c) {
      const T* xc = x.data() + c * H * W;
      for (std::size_t ky = 0; ky < KH; ++ky) {
        for (std::size_t kx = 0; kx < KW; ++kx) {
          const T wv = w[((f * C + c) * KH + ky) * KW + kx];
          const auto [lo, hi] = col_range(kx);
          const std::ptrdiff_t xoff = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::size_t oy = 0; oy < OH; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy) * str + static_cast<std::ptrdiff_t>(ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            const T* xr = xc + iy * static_cast<std::ptrdiff_t>(W) + xoff;
            T* orow = of + oy * OW;
            if (str == 1) {
              for (std::ptrdiff_t ox = lo; ox < hi; ++ox) orow[ox] += wv * xr[ox];
            } else {
              for (std::ptrdiff_t ox = lo; ox < hi; ++ox) orow[ox] += wv * xr[ox * str];
            }
          }
        }
      }
    }
  }

  return tape.record("conv2d", std::move(out), {input, weight, bias},
      [=](Tape<T>& t, std::span<const T> g) {
        const auto xv = t.value(input).data();
        const auto wv = t.value(weight).data();
        if (t.requires_grad(bias)) {
          auto gb = t.grad_buffer(bias);
          for (std::size_t f = 0; f < F; ++f) {
            double s = 0.0;
            for (std::size_t k = 0; k < OH * OW; ++k) s += g[f * OH * OW + k];
            gb[f] += static_cast<T>(s);
          }
        }
        const bool need_w = t.requires_grad(weight);
        const bool need_x = t.requires_grad(input);
        std::span<T> gw, gx;
        if (need_w) gw = t.grad_buffer(weight);
        if (need_x) gx = t.grad_buffer(input);
        for (std::size_t f = 0; f < F; ++f) {
          const T* gf = g.data() + f * OH * OW;
          for (std::size_t c = 0; c < C; ++c) {
            const T* xc = xv.data() + c * H * W;
            for (std::size_t ky = 0; ky < KH; ++ky) {
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const std::size_t widx = ((f * C + c) * KH + ky) * KW + kx;
                const auto [lo, hi] = col_range(kx);
                const std::ptrdiff_t xoff = static_cast<std::ptrdiff_t>(kx) - pad;
                double acc = 0.0;
                const T wk = wv[widx];
                for (std::size_t oy = 0; oy < OH; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy) * str + static_cast<std::ptrdiff_t>(ky) - pad;
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                  const std::ptrdiff_t rowoff = iy * static_cast<std::ptrdiff_t>(W) + xoff;
                  const T* grow = gf + oy * OW;
                  if (need_w) {
                    const T* xr = xc + rowoff;
                    T row = T{};
                    if (str == 1) {
                      row = detail::dot(grow + lo, xr + lo, static_cast<std::size_t>(hi - lo));
                    } else {
                      for (std::ptrdiff_t ox = lo; ox < hi; ++ox) row += grow[ox] * xr[ox * str];
                    }
                    acc += row;
                  }
                  if (need_x) {
                    T* gxr = gx.data() + c * H * W + rowoff;
                    if (str == 1) {
                      for (std::ptrdiff_t ox = lo; ox < hi; ++ox) gxr[ox] += wk * grow[ox];
                    } else {
                      for (std::ptrdiff_t ox = lo; ox < hi; ++ox) gxr[ox * str] += wk * grow[ox];
                    }
                  }
                }
                if (need_w) gw[widx] += static_cast<T>(acc);
              }
            }
          }
        }
      });
}

template <class T>
Var relu(Tape<T>& tape, Var input) {
  Tensor<T> out = tape.value(input);
  for (auto& v : out.data()) v = v > T{} ? v : T{};
  return tape.record("relu", std::move(out), {input},
      [=](Tape<T>& t, std::span<const T> g) {
        const auto x = t.value(input).data();
        auto gx = t.grad_buffer(input);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > T{}) gx[i] += g[i];
        }
      });
}

/// Max over window×window cells with the given stride. Gradient goes to the
/// first maximal cell in row-major order. ceil_mode keeps partial windows at
/// the bottom/right edge.
template <class T>
Var maxpool2d(Tape<T>& tape, Var input, std::size_t window, std::size_t stride,
              bool ceil_mode = false) {
  const Shape& xs = tape.shape(input);
  detail::require_rank(xs, 3, "maxpool2d", "input");
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: window and stride must be positive");
  const std::size_t C = xs[0], H = xs[1], W = xs[2];
  if (window > H || window > W) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " larger than input " + to_string(xs));
  }
  const std::size_t OH = pool_extent(H, window, stride, ceil_mode);
  const std::size_t OW = pool_extent(W, window, stride, ceil_mode);
  const auto x = tape.value(input).data();
  Tensor<T> out(Shape{C, OH, OW});
  std::vector<std::size_t> argmax(out.size());
  auto o = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::size_t y0 = oy * stride, x0 = ox * stride;
        const std::size_t y1 = std::min(H, y0 + window), x1 = std::min(W, x0 + window);
        std::size_t best = (c * H + y0) * W + x0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t xx = x0; xx < x1; ++xx) {
            const std::size_t idx = (c * H + y) * W + xx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t oi = (c * OH + oy) * OW + ox;
        o[oi] = x[best];
        argmax[oi] = best;
      }
    }
  }
  return tape.record("maxpool2d", std::move(out), {input},
      [=, argmax = std::move(argmax)](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(input);
        for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
      });
}

/// weight (m×n) · input (n) + bias (m). Any-rank input is flattened.
template <class T>
Var dense(Tape<T>& tape, Var input, Var weight, Var bias) {
  const Shape& ws = tape.shape(weight);
  const Shape& bs = tape.shape(bias);
  detail::require_rank(ws, 2, "dense", "weight");
  detail::require_rank(bs, 1, "dense", "bias");
  const std::size_t M = ws[0], N = ws[1];
  const std::size_t n_in = tape.value(input).size();
  if (n_in != N) {
    throw ShapeError("dense: input has " + std::to_string(n_in) +
                     " elements but weight is " + to_string(ws));
  }
  if (bs[0] != M) {
    throw ShapeError("dense: bias length " + std::to_string(bs[0]) +
                     " does not match output size " + std::to_string(M));
  }
  const auto x = tape.value(input).data();
  const auto w = tape.value(weight).data();
  const auto b = tape.value(bias).data();
  Tensor<T> out(Shape{M});
  for (std::size_t i = 0; i < M; ++i) {
    double s = b[i];
    const T* row = w.data() + i * N;
    for (std::size_t j = 0; j < N; ++j) s += static_cast<double>(row[j]) * x[j];
    out[i] = static_cast<T>(s);
  }
  return tape.record("dense", std::move(out), {input, weight, bias},
      [=](Tape<T>& t, std::span<const T> g) {
        const auto xv = t.value(input).data();
        const auto wv = t.value(weight).data();
        if (t.requires_grad(bias)) {
          auto gb = t.grad_buffer(bias);
          for (std::size_t i = 0; i < M; ++i) gb[i] += g[i];
        }
        if (t.requires_grad(weight)) {
          auto gw = t.grad_buffer(weight);
          for (std::size_t i = 0; i < M; ++i) {
            T* row = gw.data() + i * N;
            for (std::size_t j = 0; j < N; ++j) row[j] += g[i] * xv[j];
          }
        }
        if (t.requires_grad(input)) {
          auto gx = t.grad_buffer(input);
          std::vector<double> acc(N, 0.0);
          for (std::size_t i = 0; i < M; ++i) {
            const T* row = wv.data() + i * N;
            for (std::size_t j = 0; j < N; ++j) acc[j] += static_cast<double>(g[i]) * row[j];
          }
          for (std::size_t j = 0; j < N; ++j) gx[j] += static_cast<T>(acc[j]);
        }
      });
}

template <class T>
Var reshape(Tape<T>& tape, Var input, Shape shape) {
  Tensor<T> out = tape.value(input).reshape(std::move(shape));
  return tape.record("reshape", std::move(out), {input},
      [=](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(input);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
}

template <class T>
Var flatten(Tape<T>& tape, Var input) {
  return reshape(tape, input, Shape{tape.value(input).size()});
}

/// input / max(||input||, epsilon).
template <class T>
Var l2_normalize(Tape<T>& tape, Var input, double epsilon = 1e-12) {
  const auto x = tape.value(input).data();
  double sq = 0.0;
  for (T v : x) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  const bool clamped = norm < epsilon;
  const double denom = clamped ? epsilon : norm;
  Tensor<T> out(tape.value(input).shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(x[i] / denom);
  return tape.record("l2_normalize", std::move(out), {input},
      [=](Tape<T>& t, std::span<const T> g) {
        const auto xv = t.value(input).data();
        auto gx = t.grad_buffer(input);
        if (clamped) {
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += static_cast<T>(g[i] / denom);
          return;
        }
        // d(x/|x|) = (g - y (y.g)) / |x| with y = x/|x|.
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += static_cast<double>(g[i]) * xv[i];
        dot /= denom;
        for (std::size_t i = 0; i < g.size(); ++i) {
          gx[i] += static_cast<T>((g[i] - (xv[i] / denom) * dot) / denom);
        }
      });
}

/// Sum of all elements, as a scalar.
template <class T>
Var sum(Tape<T>& tape, Var input) {
  double s = 0.0;
  for (T v : tape.value(input).data()) s += v;
  return tape.record("sum", Tensor<T>::scalar(static_cast<T>(s)), {input},
      [=](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(input);
        for (auto& v : gx) v += g[0];
      });
}

template <class T>
Var scale(Tape<T>& tape, Var input, double factor) {
  Tensor<T> out = tape.value(input);
  for (auto& v : out.data()) v = static_cast<T>(v * factor);
  return tape.record("scale", std::move(out), {input},
      [=](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(input);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += static_cast<T>(g[i] * factor);
      });
}

/// Mean of a list of scalar nodes.
template <class T>
Var mean_of(Tape<T>& tape, std::span<const Var> scalars) {
  if (scalars.empty()) throw ShapeError("mean_of: empty input list");
  double s = 0.0;
  for (Var v : scalars) {
    if (tape.value(v).size() != 1) throw ShapeError("mean_of: inputs must be scalars");
    s += tape.value(v)[0];
  }
  const double n = static_cast<double>(scalars.size());
  std::vector<Var> ins(scalars.begin(), scalars.end());
  return tape.record("mean", Tensor<T>::scalar(static_cast<T>(s / n)), scalars,
      [=](Tape<T>& t, std::span<const T> g) {
        for (Var v : ins) {
          if (t.requires_grad(v)) t.grad_buffer(v)[0] += static_cast<T>(g[0] / n);
        }
      });
}

/// Euclidean distance sqrt(sum((a-b)^2)) between equal-size tensors.
/// The gradient at a == b is taken as zero.
template <class T>
Var euclidean_distance(Tape<T>& tape, Var a, Var b) {
  const auto av = tape.value(a).data();
  const auto bv = tape.value(b).data();
  if (av.size() != bv.size()) {
    throw ShapeError("euclidean_distance: sizes " + std::to_string(av.size()) + " and " +
                     std::to_string(bv.size()) + " differ");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    sq += d * d;
  }
  const double dist = std::sqrt(sq);
  return tape.record("euclidean_distance", Tensor<T>::scalar(static_cast<T>(dist)), {a, b},
      [=](Tape<T>& t, std::span<const T> g) {
        if (dist == 0.0) return;
        const auto x = t.value(a).data();
        const auto y = t.value(b).data();
        const bool ga = t.requires_grad(a), gb = t.requires_grad(b);
        std::span<T> dx, dy;
        if (ga) dx = t.grad_buffer(a);
        if (gb) dy = t.grad_buffer(b);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double d = (static_cast<double>(x[i]) - y[i]) / dist * g[0];
          if (ga) dx[i] += static_cast<T>(d);
          if (gb) dy[i] -= static_cast<T>(d);
        }
      });
}

/// max(d(a,p) - d(a,n) + margin, 0) with raw Euclidean distances.
template <class T>
Var triplet_loss(Tape<T>& tape, Var anchor, Var positive, Var negative, double margin) {
  if (margin < 0.0) throw ConfigError("triplet_loss: margin must be non-negative");
  Var dap = euclidean_distance(tape, anchor, positive);
  Var dan = euclidean_distance(tape, anchor, negative);
  const double raw = static_cast<double>(tape.value(dap)[0]) - tape.value(dan)[0] + margin;
  const bool active = raw > 0.0;
  return tape.record("triplet_loss", Tensor<T>::scalar(static_cast<T>(active ? raw : 0.0)),
      {dap, dan},
      [=](Tape<T>& t, std::span<const T> g) {
        if (!active) return;
        if (t.requires_grad(dap)) t.grad_buffer(dap)[0] += g[0];
        if (t.requires_grad(dan)) t.grad_buffer(dan)[0] -= g[0];
      });
}

/// Largest |analytic - central difference| / max(1, |analytic|) over all
/// coordinates of `input`. `build` maps (tape, input var) to a scalar var.
template <class T>
double grad_check(const std::function<Var(Tape<T>&, Var)>& build, const Tensor<T>& input,
                  double step) {
  Tape<T> tape;
  Var x = tape.variable(input);
  Var loss = build(tape, x);
  tape.backward(loss);
  const std::vector<T> analytic = tape.grad(x);

  auto eval = [&](const Tensor<T>& probe) {
    Tape<T> t;
    Var v = t.variable(probe);
    return static_cast<double>(t.value(build(t, v))[0]);
  };

  double worst = 0.0;
  Tensor<T> probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T orig = input[i];
    probe[i] = static_cast<T>(orig + step);
    const double up = eval(probe);
    probe[i] = static_cast<T>(orig - step);
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace sigscat
