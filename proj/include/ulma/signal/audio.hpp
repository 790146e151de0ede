#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ulma/error.hpp"

namespace ulma::signal {

inline constexpr int kMinSampleRate = 8000;
inline constexpr int kMaxSampleRate = 48000;

/// Mono waveform with amplitudes in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;
  std::string source_id;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_s() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
};

inline void validate(const AudioClip& clip) {
  if (clip.sample_rate < kMinSampleRate || clip.sample_rate > kMaxSampleRate)
    throw Error(Errc::UnsupportedFormat, "sample rate " + std::to_string(clip.sample_rate) + " outside 8000..48000");
  for (double s : clip.samples)
    if (!(s >= -1.0 && s <= 1.0)) throw Error(Errc::InvalidArgument, "sample outside [-1, 1]");
}

/// Scales the clip so that max |sample| equals `target_peak`. All-zero clips pass through.
inline AudioClip normalize_clip(const AudioClip& clip, double target_peak = 0.9) {
  if (clip.samples.empty()) throw Error(Errc::EmptyAudio, "cannot normalize an empty clip");
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  AudioClip out = clip;
  if (peak == 0.0) return out;
  const double gain = target_peak / peak;
  for (double& s : out.samples) s *= gain;
  return out;
}

}  // namespace ulma::signal
