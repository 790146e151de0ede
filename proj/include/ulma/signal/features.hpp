#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/matrix.hpp"
#include "ulma/signal/audio.hpp"
#include "ulma/signal/fft.hpp"

namespace ulma::signal {

enum class Window { Hamming, Rectangular };

/// Framing and filterbank parameters. Lengths are in samples.
struct FeatureConfig {
  std::size_t frame_len = 400;
  std::size_t hop = 160;
  std::size_t n_fft = 512;
  std::size_t n_mels = 26;
  std::size_t n_ceps = 13;
  double pre_emphasis = 0.97;
  double energy_floor = 1e-10;
  Window window = Window::Hamming;

  /// 25 ms frames, 10 ms hop, FFT size rounded up to a power of two.
  static FeatureConfig for_rate(int sample_rate) {
    FeatureConfig cfg;
    cfg.frame_len = static_cast<std::size_t>(std::lround(0.025 * sample_rate));
    cfg.hop = static_cast<std::size_t>(std::lround(0.010 * sample_rate));
    cfg.n_fft = next_power_of_two(cfg.frame_len);
    return cfg;
  }

  void validate() const {
    if (hop == 0 || hop > frame_len || frame_len > n_fft)
      throw Error(Errc::InvalidArgument, "need 0 < hop <= frame_len <= n_fft");
    if (!is_power_of_two(n_fft)) throw Error(Errc::InvalidArgument, "n_fft must be a power of two");
    if (n_ceps != 13) throw Error(Errc::InvalidArgument, "n_ceps is fixed at 13");
    if (n_ceps > n_mels) throw Error(Errc::InvalidArgument, "n_ceps exceeds n_mels");
    if (!(energy_floor > 0.0)) throw Error(Errc::InvalidArgument, "energy_floor must be positive");
  }
};

inline constexpr std::size_t kFeatureDim = 39;

/// frames × 39: statics (col 0 = log-energy), deltas, delta-deltas.
struct FeatureMatrix {
  Matrix values;
  double hop_s = 0.0;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
};

inline std::size_t frame_count(std::size_t n_samples, std::size_t frame_len, std::size_t hop) {
  if (n_samples < frame_len) throw Error(Errc::ClipTooShort, "clip shorter than one frame");
  return 1 + (n_samples - frame_len) / hop;
}

inline std::vector<double> window_coefficients(Window w, std::size_t len) {
  std::vector<double> out(len, 1.0);
  if (w == Window::Hamming && len > 1) {
    for (std::size_t n = 0; n < len; ++n)
      out[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(len - 1));
  }
  return out;
}

/// frames × (n_fft/2 + 1) squared DFT magnitudes of windowed frames.
inline Matrix power_spectrogram(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t frames = frame_count(clip.size(), cfg.frame_len, cfg.hop);
  const auto win = window_coefficients(cfg.window, cfg.frame_len);
  Matrix out(frames, cfg.n_fft / 2 + 1);
  std::vector<double> frame(cfg.frame_len);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < cfg.frame_len; ++i) frame[i] = clip.samples[t * cfg.hop + i] * win[i];
    const auto p = power_spectrum(frame, cfg.n_fft);
    std::copy(p.begin(), p.end(), out.row(t).begin());
  }
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// n_mels × (n_fft/2 + 1) triangular filters equally spaced on the HTK mel scale, 0 Hz to Nyquist.
inline Matrix mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate) {
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m)
    edges[m] = mel_to_hz(mel_hi * static_cast<double>(m) / static_cast<double>(n_mels + 1));
  Matrix fb(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb(m, k) = w;
    }
  }
  return fb;
}

// Regression deltas over ±2 frames with edge replication.
inline void delta_columns(Matrix& m, std::size_t src, std::size_t dst, std::size_t width) {
  const auto rows = static_cast<std::ptrdiff_t>(m.rows());
  for (std::ptrdiff_t t = 0; t < rows; ++t) {
    for (std::size_t c = 0; c < width; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t n = 1; n <= 2; ++n) {
        const auto fwd = static_cast<std::size_t>(std::min(t + n, rows - 1));
        const auto back = static_cast<std::size_t>(std::max<std::ptrdiff_t>(t - n, 0));
        acc += static_cast<double>(n) * (m(fwd, src + c) - m(back, src + c));
      }
      m(static_cast<std::size_t>(t), dst + c) = acc / 10.0;
    }
  }
}

/// 39-dimensional MFCC features: 13 statics with c0 replaced by log frame energy, plus Δ and ΔΔ.
inline FeatureMatrix mfcc39(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t frames = frame_count(clip.size(), cfg.frame_len, cfg.hop);
  const auto win = window_coefficients(cfg.window, cfg.frame_len);
  const Matrix fb = mel_filterbank(cfg.n_mels, cfg.n_fft, clip.sample_rate);
  const std::size_t nc = cfg.n_ceps;

  FeatureMatrix out;
  out.values = Matrix(frames, kFeatureDim);
  out.hop_s = static_cast<double>(cfg.hop) / clip.sample_rate;

  std::vector<double> frame(cfg.frame_len);
  std::vector<double> logmel(cfg.n_mels);
  const double dct_scale = std::sqrt(2.0 / static_cast<double>(cfg.n_mels));
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = clip.samples.data() + t * cfg.hop;
    double energy = 0.0;
    for (std::size_t i = 0; i < cfg.frame_len; ++i) energy += x[i] * x[i];
    for (std::size_t i = 0; i < cfg.frame_len; ++i) {
      const double prev = i > 0 ? x[i - 1] : x[0];
      frame[i] = (x[i] - cfg.pre_emphasis * prev) * win[i];
    }
    const auto power = power_spectrum(frame, cfg.n_fft);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      auto w = fb.row(m);
      for (std::size_t k = 0; k < power.size(); ++k) e += w[k] * power[k];
      logmel[m] = std::log(std::max(e, cfg.energy_floor));
    }
    out.values(t, 0) = std::log(std::max(energy, cfg.energy_floor));
    for (std::size_t i = 1; i < nc; ++i) {
      double c = 0.0;
      for (std::size_t j = 0; j < cfg.n_mels; ++j)
        c += logmel[j] * std::cos(std::numbers::pi * static_cast<double>(i) * (static_cast<double>(j) + 0.5) /
                                  static_cast<double>(cfg.n_mels));
      out.values(t, i) = dct_scale * c;
    }
  }
  delta_columns(out.values, 0, nc, nc);
  delta_columns(out.values, nc, 2 * nc, nc);
  return out;
}

/// Windowed-RMS amplitude envelope at the hop rate.
struct Envelope {
  std::vector<double> values;
  double hop_s = 0.01;
  double window_s = 0.0;  // frame t is centred at t·hop_s + window_s/2
  double noise_floor = 0.0;

  std::size_t size() const noexcept { return values.size(); }
  double frame_centre_s(std::size_t t) const noexcept { return static_cast<double>(t) * hop_s + window_s / 2.0; }
};

/// Linear-interpolated percentile, p in [0, 1].
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double idx = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (idx - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Envelope envelope(const AudioClip& clip, double window_s = 0.02, double hop_s = 0.01) {
  const auto win = static_cast<std::size_t>(std::lround(window_s * clip.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(hop_s * clip.sample_rate));
  if (win < 1 || hop < 1) throw Error(Errc::InvalidArgument, "envelope window and hop must span at least one sample");
  const std::size_t frames = frame_count(clip.size(), win, hop);
  Envelope env;
  env.hop_s = static_cast<double>(hop) / clip.sample_rate;
  env.window_s = static_cast<double>(win) / clip.sample_rate;
  env.values.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < win; ++i) {
      const double s = clip.samples[t * hop + i];
      acc += s * s;
    }
    env.values[t] = std::sqrt(acc / static_cast<double>(win));
  }
  env.noise_floor = percentile(env.values, 0.10);
  return env;
}

}  // namespace ulma::signal
