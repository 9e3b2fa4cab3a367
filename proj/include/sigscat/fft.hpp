#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "sigscat/errors.hpp"

namespace sigscat {

using Complex = std::complex<double>;

/// Unnormalized 2D complex DFT of a fixed rows×cols grid backed by FFTW.
///
/// Plans use FFTW_ESTIMATE (deterministic, no timing-dependent choices) and
/// FFTW_UNALIGNED so any std::vector<Complex> buffer can be passed. Planning
/// is serialized through a process-wide mutex; execute is thread-safe.
class Fft2d {
 public:
  Fft2d(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    std::vector<Complex> a(rows * cols), b(rows * cols);
    std::lock_guard lock(planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_.reset(fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols),
                                    as_fftw(a.data()), as_fftw(b.data()), FFTW_FORWARD, flags));
    inverse_.reset(fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols),
                                    as_fftw(a.data()), as_fftw(b.data()), FFTW_BACKWARD, flags));
    if (!forward_ || !inverse_) throw Error("FFTW failed to create a plan");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }

  /// out[k] = sum_n in[n] exp(-2 pi i k.n / N).
  void forward(std::span<const Complex> in, std::span<Complex> out) const {
    check(in, out);
    fftw_execute_dft(forward_.get(), as_fftw(const_cast<Complex*>(in.data())), as_fftw(out.data()));
  }

  /// Inverse transform including the 1/N factor.
  void inverse(std::span<const Complex> in, std::span<Complex> out) const {
    check(in, out);
    fftw_execute_dft(inverse_.get(), as_fftw(const_cast<Complex*>(in.data())), as_fftw(out.data()));
    const double scale = 1.0 / static_cast<double>(size());
    for (auto& v : out) v *= scale;
  }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan p) const {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(p);
    }
  };
  using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  static fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

  void check(std::span<const Complex> in, std::span<Complex> out) const {
    if (in.size() != size() || out.size() != size()) {
      throw ShapeError("Fft2d: buffer size does not match the planned grid");
    }
  }

  std::size_t rows_, cols_;
  Plan forward_, inverse_;
};

}  // namespace sigscat
