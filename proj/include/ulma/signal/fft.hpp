#pragma once

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "ulma/error.hpp"

namespace ulma::signal {

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

constexpr std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// One real-to-complex FFTW plan per length. FFTW_ESTIMATE keeps plans (and results) reproducible.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n), in_(fftw_alloc_real(n)), out_(fftw_alloc_complex(n / 2 + 1)),
        plan_(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE)) {
    if (!in_ || !out_ || !plan_) throw Error(Errc::InvalidArgument, "cannot plan an FFT of length " + std::to_string(n));
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(out_);
    fftw_free(in_);
  }

  std::vector<double> power(const std::vector<double>& frame) {
    for (std::size_t i = 0; i < n_; ++i) in_[i] = i < frame.size() ? frame[i] : 0.0;
    fftw_execute(plan_);
    std::vector<double> p(n_ / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    return p;
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

inline RealFft& real_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> plans;
  auto& p = plans[n];
  if (!p) p = std::make_unique<RealFft>(n);
  return *p;
}

}  // namespace detail

/// Squared magnitudes of bins 0..n/2 of the real input zero-padded to n.
inline std::vector<double> power_spectrum(const std::vector<double>& frame, std::size_t n_fft) {
  if (!is_power_of_two(n_fft)) throw Error(Errc::InvalidArgument, "FFT length must be a power of two");
  return detail::real_fft(n_fft).power(frame);
}

}  // namespace ulma::signal
