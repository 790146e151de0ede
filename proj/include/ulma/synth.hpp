#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ulma/random.hpp"
#include "ulma/signal/audio.hpp"

// Synthetic corpora with known ground truth.

namespace ulma::synth {

using signal::AudioClip;

inline AudioClip silence(double dur_s, int rate = 16000, std::string id = {}) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.assign(static_cast<std::size_t>(std::lround(dur_s * rate)), 0.0);
  c.source_id = std::move(id);
  return c;
}

/// Adds amp·sin(2πf t + phase) over [t0, t1).
inline void add_tone(AudioClip& c, double freq, double amp, double t0, double t1, double phase = 0.0) {
  const auto b = static_cast<std::size_t>(std::lround(t0 * c.sample_rate));
  const auto e = std::min(c.samples.size(), static_cast<std::size_t>(std::lround(t1 * c.sample_rate)));
  for (std::size_t i = b; i < e; ++i)
    c.samples[i] += amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / c.sample_rate + phase);
}

inline void add_noise(AudioClip& c, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (double& s : c.samples) s += n(rng);
}

inline void clamp_samples(AudioClip& c) {
  for (double& s : c.samples) s = std::clamp(s, -1.0, 1.0);
}

inline AudioClip tone(double freq, double amp, double dur_s, int rate = 16000, double phase = 0.0) {
  AudioClip c = silence(dur_s, rate);
  add_tone(c, freq, amp, 0.0, dur_s, phase);
  return c;
}

struct BurstShape {
  double t0, t1, amp;
};

/// 1 kHz bursts over a faint noise bed.
inline AudioClip burst_clip(const std::vector<BurstShape>& bursts, double dur_s, Rng& rng, double noise = 0.005,
                            int rate = 16000) {
  AudioClip c = silence(dur_s, rate);
  for (const auto& b : bursts) add_tone(c, 1000.0, b.amp, b.t0, b.t1);
  add_noise(c, noise, rng);
  clamp_samples(c);
  return c;
}

/// Ism burst of amplitude `ism_amp` over [0.2, 0.4] s and a Fil burst of half that over [0.7, 0.8] s.
inline AudioClip two_burst_clip(Rng& rng, double ism_amp = 0.8, double fil_ratio = 0.5, double dur_s = 1.0,
                                int rate = 16000) {
  return burst_clip({{0.2, 0.4, ism_amp}, {0.7, 0.8, ism_amp * fil_ratio}}, dur_s, rng, 0.005, rate);
}

inline AudioClip noise_clip(Rng& rng, double dur_s = 1.0, double stddev = 0.01, int rate = 16000) {
  AudioClip c = silence(dur_s, rate);
  add_noise(c, stddev, rng);
  clamp_samples(c);
  return c;
}

// ---------------------------------------------------------------------------

struct EventSpan {
  std::size_t type = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;
};

struct LabeledCorpus {
  std::vector<AudioClip> clips;
  std::vector<std::vector<std::size_t>> frame_labels;  // per clip, one label per 20 ms frame
  std::vector<std::size_t> clip_labels;
  std::vector<std::vector<double>> targets;            // multi-label detection targets
  std::vector<std::vector<EventSpan>> events;
};

inline constexpr std::array<double, 4> kUnitFreqs{300.0, 800.0, 1800.0, 3600.0};

/// Clips whose 20 ms frames follow a sticky 4-state Markov chain; each state is a tone.
inline LabeledCorpus markov_unit_corpus(std::size_t n_clips, Rng& rng, double dur_s = 1.0, double stay = 0.97,
                                        int rate = 16000) {
  LabeledCorpus out;
  const auto frame_len = static_cast<std::size_t>(rate / 50);
  const auto frames = static_cast<std::size_t>(std::lround(dur_s * 50));
  std::uniform_int_distribution<std::size_t> pick(0, kUnitFreqs.size() - 1);
  for (std::size_t n = 0; n < n_clips; ++n) {
    AudioClip c = silence(dur_s, rate, "markov_" + std::to_string(n));
    std::vector<std::size_t> labels(frames);
    std::size_t state = pick(rng);
    double phase = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
      if (f > 0 && uniform01(rng) >= stay) {
        std::size_t next = pick(rng);
        while (next == state) next = pick(rng);
        state = next;
      }
      labels[f] = state;
      const double w = 2.0 * std::numbers::pi * kUnitFreqs[state] / rate;
      for (std::size_t i = f * frame_len; i < std::min(c.samples.size(), (f + 1) * frame_len); ++i) {
        c.samples[i] = 0.5 * std::sin(phase);
        phase += w;
      }
    }
    add_noise(c, 0.005, rng);
    clamp_samples(c);
    out.clips.push_back(std::move(c));
    out.frame_labels.push_back(std::move(labels));
  }
  return out;
}

/// Two classes of tones at well-separated frequencies with random amplitude and phase.
inline LabeledCorpus tone_class_corpus(std::size_t per_class, Rng& rng, double dur_s = 0.5, int rate = 16000,
                                       std::array<double, 2> freqs = {400.0, 2400.0}) {
  LabeledCorpus out;
  std::uniform_real_distribution<double> amp(0.3, 0.8), ph(0.0, 2.0 * std::numbers::pi), jitter(-0.03, 0.03);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t cls = 0; cls < 2; ++cls) {
      AudioClip c = tone(freqs[cls] * (1.0 + jitter(rng)), amp(rng), dur_s, rate, ph(rng));
      c.source_id = "tone_" + std::to_string(cls) + "_" + std::to_string(i);
      add_noise(c, 0.01, rng);
      clamp_samples(c);
      out.clips.push_back(std::move(c));
      out.clip_labels.push_back(cls);
    }
  }
  return out;
}

inline constexpr std::array<double, 3> kEventFreqs{500.0, 1500.0, 4000.0};

/// 1 s clips with three disjoint time slots; each event type appears with probability 1/2 in its own
/// randomly assigned slot. Targets mark which types are present.
inline LabeledCorpus detection_corpus(std::size_t n_clips, Rng& rng, int rate = 16000) {
  LabeledCorpus out;
  constexpr std::array<std::array<double, 2>, 3> slots{{{0.05, 0.30}, {0.37, 0.62}, {0.70, 0.95}}};
  std::uniform_real_distribution<double> amp(0.4, 0.8);
  for (std::size_t n = 0; n < n_clips; ++n) {
    AudioClip c = silence(1.0, rate, "detect_" + std::to_string(n));
    std::array<std::size_t, 3> slot_of{0, 1, 2};
    std::shuffle(slot_of.begin(), slot_of.end(), rng);
    std::vector<double> targets(3, 0.0);
    std::vector<EventSpan> events;
    for (std::size_t e = 0; e < 3; ++e) {
      if (uniform01(rng) < 0.5) continue;
      targets[e] = 1.0;
      const auto& s = slots[slot_of[e]];
      add_tone(c, kEventFreqs[e], amp(rng), s[0], s[1]);
      events.push_back({e, s[0], s[1]});
    }
    out.events.push_back(std::move(events));
    add_noise(c, 0.01, rng);
    clamp_samples(c);
    out.clips.push_back(std::move(c));
    out.targets.push_back(std::move(targets));
  }
  return out;
}

struct PreferenceCorpus {
  std::vector<AudioClip> clips;
  std::vector<double> peaks;  // tone amplitude of each clip
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (chosen, rejected), chosen louder
};

/// Tones of random frequency and amplitude; in every pair the chosen clip has the strictly higher peak.
inline PreferenceCorpus preference_corpus(std::size_t n_clips, std::size_t n_pairs, Rng& rng, double dur_s = 0.5,
                                          int rate = 16000) {
  PreferenceCorpus out;
  std::uniform_real_distribution<double> amp(0.05, 0.95), freq(300.0, 3000.0), ph(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n_clips; ++i) {
    const double a = amp(rng);
    AudioClip c = tone(freq(rng), a, dur_s, rate, ph(rng));
    c.source_id = "pref_" + std::to_string(i);
    add_noise(c, 0.005, rng);
    clamp_samples(c);
    out.clips.push_back(std::move(c));
    out.peaks.push_back(a);
  }
  std::uniform_int_distribution<std::size_t> pick(0, n_clips - 1);
  while (out.pairs.size() < n_pairs) {
    const std::size_t i = pick(rng), j = pick(rng);
    if (out.peaks[i] == out.peaks[j]) continue;
    out.pairs.emplace_back(out.peaks[i] > out.peaks[j] ? i : j, out.peaks[i] > out.peaks[j] ? j : i);
  }
  return out;
}

}  // namespace ulma::synth
