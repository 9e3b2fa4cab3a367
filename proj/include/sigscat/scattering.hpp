#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sigscat/errors.hpp"
#include "sigscat/fft.hpp"
#include "sigscat/parallel.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

/// Geometry of the scattering stage.
struct ScatteringConfig {
  int J = 2;                 ///< number of dyadic scales
  int L = 8;                 ///< orientations per scale, spread over [0, pi)
  int input_height = 180;
  int input_width = 300;

  void validate() const {
    if (J < 1) throw ConfigError("scattering J must be >= 1, got " + std::to_string(J));
    if (L < 1) throw ConfigError("scattering L must be >= 1, got " + std::to_string(L));
    if (J > 16) throw ConfigError("scattering J too large: " + std::to_string(J));
    if (input_height < 1 || input_width < 1) {
      throw ConfigError("scattering input extents must be positive");
    }
    const int m = 1 << J;
    if (input_height % m != 0 || input_width % m != 0) {
      throw ConfigError("input extents " + std::to_string(input_height) + "x" +
                        std::to_string(input_width) + " are not divisible by 2^J = " +
                        std::to_string(m));
    }
  }

  friend bool operator==(const ScatteringConfig&, const ScatteringConfig&) = default;
};

struct ScatteringLayout {
  std::size_t channels, height, width;
  friend bool operator==(const ScatteringLayout&, const ScatteringLayout&) = default;
};

/// Number of order-2 paths is L^2 J(J-1)/2 because only j2 > j1 is kept.
inline std::size_t scattering_channels(int J, int L, int max_order = 2) {
  std::size_t c = 1;
  if (max_order >= 1) c += static_cast<std::size_t>(J) * L;
  if (max_order >= 2) c += static_cast<std::size_t>(L) * L * J * (J - 1) / 2;
  return c;
}

inline ScatteringLayout output_layout(const ScatteringConfig& config) {
  config.validate();
  return {scattering_channels(config.J, config.L),
          static_cast<std::size_t>(config.input_height >> config.J),
          static_cast<std::size_t>(config.input_width >> config.J)};
}

/// One frequency-domain filter sampled on the full-resolution DFT grid.
/// Responses are real: each spatial filter is an even Gaussian envelope
/// times a plane wave.
struct Filter {
  int scale = 0;            ///< j; the low-pass uses J
  int orientation = 0;      ///< theta index; 0 for the low-pass
  double theta = 0.0;       ///< radians
  double xi = 0.0;          ///< center frequency (radians/sample); 0 for the low-pass
  double sigma = 0.0;       ///< spatial Gaussian width
  double bandwidth = 0.0;   ///< radial frequency std, 1/sigma
  std::vector<double> response;  ///< rows x cols, row-major, DFT index order
};

/// Scattering path of one output channel. j1/j2 are -1 when absent.
struct ScatteringPath {
  int order = 0;
  int j1 = -1, theta1 = -1, j2 = -1, theta2 = -1;
  friend bool operator==(const ScatteringPath&, const ScatteringPath&) = default;
};

inline std::string to_string(const ScatteringPath& p) {
  switch (p.order) {
    case 0: return "order0";
    case 1: return "order1(j1=" + std::to_string(p.j1) + ",t1=" + std::to_string(p.theta1) + ")";
    default:
      return "order2(j1=" + std::to_string(p.j1) + ",t1=" + std::to_string(p.theta1) +
             ",j2=" + std::to_string(p.j2) + ",t2=" + std::to_string(p.theta2) + ")";
  }
}

/// Channel order: order 0; order 1 by (j1, theta1); order 2 by
/// (j1, theta1, j2, theta2) with j2 > j1.
inline std::vector<ScatteringPath> scattering_paths(int J, int L, int max_order = 2) {
  std::vector<ScatteringPath> paths{{0}};
  if (max_order >= 1) {
    for (int j = 0; j < J; ++j)
      for (int t = 0; t < L; ++t) paths.push_back({1, j, t});
  }
  if (max_order >= 2) {
    for (int j1 = 0; j1 < J; ++j1)
      for (int t1 = 0; t1 < L; ++t1)
        for (int j2 = j1 + 1; j2 < J; ++j2)
          for (int t2 = 0; t2 < L; ++t2) paths.push_back({2, j1, t1, j2, t2});
  }
  return paths;
}

/// Morlet band-pass filters psi(j, theta) and the Gaussian low-pass phi.
///
/// Widths follow the usual scattering construction: sigma_j = 0.8 * 2^j,
/// xi_j = 3pi/4 / 2^j, angular slant 4/L, and a low-pass of width 0.6 * 2^J
/// with unit DC gain. All Gaussians are periodized over the DFT grid. The
/// band-pass family is then rescaled so the Littlewood-Paley sum never
/// exceeds 1, which makes the whole cascade non-expansive.
class FilterBank {
 public:
  explicit FilterBank(const ScatteringConfig& config) : config_(config) {
    config_.validate();
    rows_ = static_cast<std::size_t>(config_.input_height);
    cols_ = static_cast<std::size_t>(config_.input_width);
    build();
    fft_ = std::make_shared<Fft2d>(rows_, cols_);
    const auto lay = output_layout(config_);
    fft_small_ = std::make_shared<Fft2d>(lay.height, lay.width);
  }

  const ScatteringConfig& config() const noexcept { return config_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  /// Band-pass filters ordered by (j, theta).
  const std::vector<Filter>& psi() const noexcept { return psi_; }
  const Filter& psi(int j, int theta) const {
    return psi_.at(static_cast<std::size_t>(j * config_.L + theta));
  }
  const Filter& phi() const noexcept { return phi_; }
  /// Factor applied to every band-pass filter by the frame normalization.
  double psi_gain() const noexcept { return psi_gain_; }

  const Fft2d& fft() const noexcept { return *fft_; }
  const Fft2d& fft_small() const noexcept { return *fft_small_; }

  /// Signed angular frequency of DFT index k on an n-point axis.
  static double angular_frequency(std::size_t k, std::size_t n) {
    const auto ks = static_cast<double>(k <= n / 2 ? static_cast<long>(k)
                                                   : static_cast<long>(k) - static_cast<long>(n));
    return 2.0 * std::numbers::pi * ks / static_cast<double>(n);
  }

 private:
  // Periodized anisotropic Gaussian exp(-1/2 w^T M w) shifted to `center`,
  // where M = sigma^2 R diag(1, 1/slant^2) R^T.
  double periodized_gaussian(double wy, double wx, double sigma, double slant,
                             double theta) const {
    const double c = std::cos(theta), s = std::sin(theta);
    double acc = 0.0;
    for (int a = -2; a <= 2; ++a) {
      for (int b = -2; b <= 2; ++b) {
        const double y = wy + 2.0 * std::numbers::pi * a;
        const double x = wx + 2.0 * std::numbers::pi * b;
        const double along = y * c + x * s;
        const double across = -y * s + x * c;
        acc += std::exp(-0.5 * sigma * sigma * (along * along + across * across / (slant * slant)));
      }
    }
    return acc;
  }

  void build() {
    const int J = config_.J, L = config_.L;
    const double slant = 4.0 / L;
    const std::size_t n = rows_ * cols_;

    for (int j = 0; j < J; ++j) {
      const double sigma = 0.8 * std::pow(2.0, j);
      const double xi = 0.75 * std::numbers::pi / std::pow(2.0, j);
      for (int t = 0; t < L; ++t) {
        const double theta = std::numbers::pi * t / L;
        Filter f;
        f.scale = j;
        f.orientation = t;
        f.theta = theta;
        f.xi = xi;
        f.sigma = sigma;
        f.bandwidth = 1.0 / sigma;
        f.response.resize(n);
        const double cy = xi * std::cos(theta), cx = xi * std::sin(theta);
        // Subtracting beta * envelope forces an exact zero at DC.
        const double beta = periodized_gaussian(-cy, -cx, sigma, slant, theta) /
                            periodized_gaussian(0.0, 0.0, sigma, slant, theta);
        for (std::size_t r = 0; r < rows_; ++r) {
          const double wy = angular_frequency(r, rows_);
          for (std::size_t c = 0; c < cols_; ++c) {
            const double wx = angular_frequency(c, cols_);
            f.response[r * cols_ + c] =
                periodized_gaussian(wy - cy, wx - cx, sigma, slant, theta) -
                beta * periodized_gaussian(wy, wx, sigma, slant, theta);
          }
        }
        psi_.push_back(std::move(f));
      }
    }

    phi_.scale = J;
    phi_.sigma = 0.6 * std::pow(2.0, J);
    phi_.bandwidth = 1.0 / phi_.sigma;
    phi_.response.resize(n);
    const double dc = periodized_gaussian(0.0, 0.0, phi_.sigma, 1.0, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double wy = angular_frequency(r, rows_);
      for (std::size_t c = 0; c < cols_; ++c) {
        const double wx = angular_frequency(c, cols_);
        phi_.response[r * cols_ + c] = periodized_gaussian(wy, wx, phi_.sigma, 1.0, 0.0) / dc;
      }
    }

    // Largest g with |phi|^2 + g^2 * B <= 1 everywhere, B the symmetrized
    // band-pass energy.
    std::vector<double> band(n, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        const std::size_t k = r * cols_ + c;
        const std::size_t km = ((rows_ - r) % rows_) * cols_ + (cols_ - c) % cols_;
        for (const auto& f : psi_) {
          band[k] += 0.5 * (f.response[k] * f.response[k] + f.response[km] * f.response[km]);
        }
      }
    }
    const double band_peak = *std::max_element(band.begin(), band.end());
    double gain_sq = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      // Near DC both sides vanish; rounding there says nothing about the bound.
      if (band[k] <= 1e-9 * band_peak) continue;
      const double room = 1.0 - phi_.response[k] * phi_.response[k];
      gain_sq = std::min(gain_sq, std::max(room, 0.0) / band[k]);
    }
    psi_gain_ = std::sqrt(gain_sq);
    for (auto& f : psi_) {
      for (auto& v : f.response) v *= psi_gain_;
    }
  }

  ScatteringConfig config_;
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<Filter> psi_;
  Filter phi_;
  double psi_gain_ = 1.0;
  std::shared_ptr<Fft2d> fft_, fft_small_;
};

inline FilterBank build_filter_bank(const ScatteringConfig& config) { return FilterBank(config); }

/// |phi(w)|^2 + 1/2 sum_psi (|psi(w)|^2 + |psi(-w)|^2) on the DFT grid.
inline std::vector<double> littlewood_paley(const FilterBank& bank) {
  const std::size_t R = bank.rows(), C = bank.cols();
  std::vector<double> lp(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t k = r * C + c;
      const std::size_t km = ((R - r) % R) * C + (C - c) % C;
      double s = bank.phi().response[k] * bank.phi().response[k];
      for (const auto& f : bank.psi()) {
        s += 0.5 * (f.response[k] * f.response[k] + f.response[km] * f.response[km]);
      }
      lp[k] = s;
    }
  }
  return lp;
}

struct ScatteringOutput {
  Tensor<double> coefficients;              ///< channels x H/2^J x W/2^J
  std::vector<ScatteringPath> path_index;   ///< one entry per channel
};

namespace detail {

// phi-filter a spectrum and return the real signal sampled every 2^J pixels.
// Subsampling in space is aliasing (folding) in frequency, so the spectrum
// is folded onto the small grid and inverted there.
inline void lowpass_subsample(const FilterBank& bank, std::span<const Complex> spectrum,
                              std::vector<Complex>& small_spec, std::vector<Complex>& small_out,
                              double* dst) {
  const std::size_t R = bank.rows(), C = bank.cols();
  const std::size_t h = bank.fft_small().rows(), w = bank.fft_small().cols();
  const std::size_t m = R / h;
  const auto& phi = bank.phi().response;
  std::fill(small_spec.begin(), small_spec.end(), Complex{});
  for (std::size_t r = 0; r < R; ++r) {
    Complex* row = small_spec.data() + (r % h) * w;
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t k = r * C + c;
      row[c % w] += spectrum[k] * phi[k];
    }
  }
  bank.fft_small().inverse(small_spec, small_out);
  const double scale = 1.0 / static_cast<double>(m * m);
  for (std::size_t i = 0; i < h * w; ++i) dst[i] = small_out[i].real() * scale;
}

}  // namespace detail

/// Scattering coefficients of a real image up to `max_order` (0, 1 or 2).
inline ScatteringOutput scatter(const Tensor<double>& image, const FilterBank& bank,
                                int max_order = 2) {
  if (max_order < 0 || max_order > 2) {
    throw Error("scatter: max_order " + std::to_string(max_order) + " is unsupported (0..2)");
  }
  const auto& cfg = bank.config();
  const std::size_t R = bank.rows(), C = bank.cols();
  if (image.rank() != 2 || image.dim(0) != R || image.dim(1) != C) {
    throw ShapeError("scatter: image " + to_string(image.shape()) +
                     " does not match filter bank extents [" + std::to_string(R) + "x" +
                     std::to_string(C) + "]");
  }
  const int J = cfg.J, L = cfg.L;
  const std::size_t h = R >> J, w = C >> J, hw = h * w;
  const std::size_t n = R * C;

  ScatteringOutput out{Tensor<double>(Shape{scattering_channels(J, L, max_order), h, w}),
                       scattering_paths(J, L, max_order)};
  double* dst = out.coefficients.data().data();

  std::vector<Complex> signal(n), spectrum(n), work(n), work_spec(n);
  std::vector<Complex> small_spec(hw), small_out(hw);
  for (std::size_t i = 0; i < n; ++i) signal[i] = image[i];
  bank.fft().forward(signal, spectrum);

  std::size_t channel = 0;
  detail::lowpass_subsample(bank, spectrum, small_spec, small_out, dst + hw * channel++);
  if (max_order == 0) return out;

  // |psi_{j1} * x| spectra are kept for the second layer when some j2 > j1 exists.
  std::vector<std::vector<Complex>> first_layer(static_cast<std::size_t>(J * L));
  for (int j1 = 0; j1 < J; ++j1) {
    for (int t1 = 0; t1 < L; ++t1) {
      const auto& psi = bank.psi(j1, t1).response;
      for (std::size_t k = 0; k < n; ++k) work_spec[k] = spectrum[k] * psi[k];
      bank.fft().inverse(work_spec, work);
      for (auto& v : work) v = std::abs(v);
      bank.fft().forward(work, work_spec);
      detail::lowpass_subsample(bank, work_spec, small_spec, small_out, dst + hw * channel++);
      if (max_order >= 2 && j1 + 1 < J) first_layer[static_cast<std::size_t>(j1 * L + t1)] = work_spec;
    }
  }
  if (max_order == 1) return out;

  for (int j1 = 0; j1 < J; ++j1) {
    for (int t1 = 0; t1 < L; ++t1) {
      const auto& u1 = first_layer[static_cast<std::size_t>(j1 * L + t1)];
      for (int j2 = j1 + 1; j2 < J; ++j2) {
        for (int t2 = 0; t2 < L; ++t2) {
          const auto& psi = bank.psi(j2, t2).response;
          for (std::size_t k = 0; k < n; ++k) work_spec[k] = u1[k] * psi[k];
          bank.fft().inverse(work_spec, work);
          for (auto& v : work) v = std::abs(v);
          bank.fft().forward(work, work_spec);
          detail::lowpass_subsample(bank, work_spec, small_spec, small_out, dst + hw * channel++);
        }
      }
    }
  }
  return out;
}

/// Scatters many images; the result order matches the input order for any
/// thread count.
inline std::vector<ScatteringOutput> scatter_batch(std::span<const Tensor<double>> images,
                                                   const FilterBank& bank, int threads = 1,
                                                   int max_order = 2) {
  std::vector<ScatteringOutput> out(images.size());
  parallel_for(images.size(), threads,
               [&](std::size_t i) { out[i] = scatter(images[i], bank, max_order); });
  return out;
}

}  // namespace sigscat
