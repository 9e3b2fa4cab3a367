// Independent reference implementations used by the unit and acceptance
// tests. Nothing here shares code paths with the library beyond reading its
// filter responses and data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "sigscat/evaluation.hpp"
#include "sigscat/scattering.hpp"
#include "sigscat/tensor.hpp"

namespace oracle {

using cplx = std::complex<double>;

// n-th roots of unity, cached per thread.
inline const std::vector<cplx>& roots(std::size_t n, bool inverse) {
  thread_local std::map<std::pair<std::size_t, bool>, std::vector<cplx>> cache;
  auto& w = cache[{n, inverse}];
  if (w.empty()) {
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
      w.push_back(std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) / n));
    }
  }
  return w;
}

// Recursive mixed-radix Cooley-Tukey: split off the smallest prime factor p,
// transform the p decimated subsequences, then combine with a naive p-point
// DFT per output group. Unnormalized, sign -1 forward.
inline std::vector<cplx> dft(const std::vector<cplx>& x, bool inverse = false) {
  const std::size_t n = x.size();
  if (n == 1) return x;
  std::size_t p = 2;
  while (n % p != 0) ++p;
  const auto& w = roots(n, inverse);
  if (p == n) {
    std::vector<cplx> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      cplx acc = 0;
      for (std::size_t t = 0; t < n; ++t) acc += x[t] * w[(k * t) % n];
      out[k] = acc;
    }
    return out;
  }
  const std::size_t m = n / p;
  std::vector<std::vector<cplx>> sub(p);
  for (std::size_t r = 0; r < p; ++r) {
    std::vector<cplx> s(m);
    for (std::size_t i = 0; i < m; ++i) s[i] = x[i * p + r];
    sub[r] = dft(s, inverse);
  }
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0;
    for (std::size_t r = 0; r < p; ++r) {
      acc += sub[r][k % m] * w[(r * k) % n];
    }
    out[k] = acc;
  }
  return out;
}

// Row-major 2D transform; the inverse includes the 1/(rows*cols) factor.
inline std::vector<cplx> dft2(const std::vector<cplx>& x, std::size_t rows, std::size_t cols,
                              bool inverse = false) {
  std::vector<cplx> tmp(x.size()), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<cplx> row(x.begin() + r * cols, x.begin() + (r + 1) * cols);
    row = dft(row, inverse);
    std::copy(row.begin(), row.end(), tmp.begin() + r * cols);
  }
  for (std::size_t c = 0; c < cols; ++c) {
    std::vector<cplx> col(rows);
    for (std::size_t r = 0; r < rows; ++r) col[r] = tmp[r * cols + c];
    col = dft(col, inverse);
    for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = col[r];
  }
  if (inverse) {
    for (auto& v : out) v /= static_cast<double>(rows * cols);
  }
  return out;
}

// Filters x with a real frequency response at full resolution.
inline std::vector<cplx> filter(const std::vector<cplx>& x, const std::vector<double>& response,
                                std::size_t rows, std::size_t cols) {
  auto spec = dft2(x, rows, cols);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= response[k];
  return dft2(spec, rows, cols, true);
}

inline std::vector<cplx> modulus(std::vector<cplx> x) {
  for (auto& v : x) v = std::abs(v);
  return x;
}

// One scattering channel computed from scratch: every convolution at full
// resolution, then the low-pass output sampled every 2^J pixels.
inline std::vector<double> scatter_path(const sigscat::Tensor<double>& image,
                                        const sigscat::FilterBank& bank,
                                        const sigscat::ScatteringPath& path) {
  const std::size_t R = bank.rows(), C = bank.cols();
  const std::size_t m = std::size_t{1} << bank.config().J;
  std::vector<cplx> u(R * C);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = image[i];
  if (path.order >= 1) u = modulus(filter(u, bank.psi(path.j1, path.theta1).response, R, C));
  if (path.order >= 2) u = modulus(filter(u, bank.psi(path.j2, path.theta2).response, R, C));
  const auto s = filter(u, bank.phi().response, R, C);
  std::vector<double> out;
  for (std::size_t r = 0; r < R; r += m) {
    for (std::size_t c = 0; c < C; c += m) out.push_back(s[r * C + c].real());
  }
  return out;
}

// Probability that a genuine pair scores strictly below a forgery pair,
// ties counted one half, by comparing every cross-class couple.
inline double mann_whitney(const std::vector<sigscat::ScoredPair>& scored) {
  double wins = 0.0;
  std::size_t couples = 0;
  for (const auto& g : scored) {
    if (!g.genuine()) continue;
    for (const auto& f : scored) {
      if (f.genuine()) continue;
      ++couples;
      if (g.score < f.score) wins += 1.0;
      else if (g.score == f.score) wins += 0.5;
    }
  }
  return wins / static_cast<double>(couples);
}

struct EerOracle {
  double eer, threshold;
};

// EER straight from the definitions: every candidate threshold is evaluated
// by counting over the full list.
inline EerOracle exhaustive_eer(const std::vector<sigscat::ScoredPair>& scored) {
  std::vector<double> distinct;
  for (const auto& s : scored) distinct.push_back(s.score);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  struct Cand {
    double t;
    int kind;   // 0 below minimum, 1 observed score, 2 midpoint
    std::size_t idx;
  };
  std::vector<Cand> cands{{std::nextafter(distinct.front(), -1e300), 0, 0}};
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    cands.push_back({distinct[i], 1, i});
    if (i + 1 < distinct.size()) cands.push_back({0.5 * (distinct[i] + distinct[i + 1]), 2, i});
  }
  double G = 0, F = 0;
  for (const auto& s : scored) (s.genuine() ? G : F) += 1;

  double best_gap = 1e300, eer = 0.0;
  Cand best = cands.front();
  for (const auto& c : cands) {
    double fa = 0, fr = 0;
    for (const auto& s : scored) {
      if (!s.genuine() && s.score <= c.t) fa += 1;
      if (s.genuine() && s.score > c.t) fr += 1;
    }
    const double fmr = fa / F, fnmr = fr / G;
    if (std::abs(fmr - fnmr) < best_gap) {
      best_gap = std::abs(fmr - fnmr);
      eer = 0.5 * (fmr + fnmr);
      best = c;
    }
  }
  double t = best.t;
  if (best.kind == 1 && best.idx + 1 < distinct.size()) t = 0.5 * (distinct[best.idx] + distinct[best.idx + 1]);
  if (best.kind == 0 && distinct.front() > 0.0) t = 0.5 * distinct.front();
  return {eer, t};
}

// Average precision from the ranked list: walk pairs by ascending score,
// one tie group at a time.
inline double ranked_average_precision(std::vector<sigscat::ScoredPair> scored) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  double P = 0;
  for (const auto& s : scored) P += s.genuine();
  double tp = 0, seen = 0, ap = 0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    double group_tp = 0;
    while (j < scored.size() && scored[j].score == scored[i].score) {
      group_tp += scored[j].genuine();
      ++j;
    }
    tp += group_tp;
    seen += static_cast<double>(j - i);
    ap += (group_tp / P) * (tp / seen);
    i = j;
  }
  return ap;
}

// Bilinear sample with half-pixel centers, coordinates clamped to the edge.
inline double bilinear_at(const std::vector<double>& img, std::size_t H, std::size_t W, std::size_t out_h,
                          std::size_t out_w, std::size_t y, std::size_t x) {
  const double sy = std::clamp((y + 0.5) * H / out_h - 0.5, 0.0, H - 1.0);
  const double sx = std::clamp((x + 0.5) * W / out_w - 0.5, 0.0, W - 1.0);
  const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
  const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  const double fy = sy - y0, fx = sx - x0;
  return img[y0 * W + x0] * (1 - fy) * (1 - fx) + img[y0 * W + x1] * (1 - fy) * fx +
         img[y1 * W + x0] * fy * (1 - fx) + img[y1 * W + x1] * fy * fx;
}

}  // namespace oracle
