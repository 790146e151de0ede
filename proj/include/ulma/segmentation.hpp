#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/signal/audio.hpp"
#include "ulma/signal/features.hpp"

namespace ulma::segmentation {

using signal::AudioClip;
using signal::Envelope;

// ---------------------------------------------------------------------------
// Comparator

struct ComparatorConfig {
  double v_th = 0.0;
  double v_max = 1.0;
  double v_min = -1.0;

  double mid() const noexcept { return (v_max + v_min) / 2.0; }
};

/// Three-level square wave: every value is exactly v_min, mid or v_max.
struct BinaryWave {
  std::vector<double> values;
  int rate = 0;
};

/// Square-wave comparator. Each output sample is
///   (v_max - v_min)/2 · sign(v_in - v_th) + (v_max + v_min)/2
/// with sign(0) = 0, so the levels are exactly v_max, v_min and their midpoint.
/// The three levels are selected directly so that outputs compare bit-equal to them.
inline BinaryWave comparator(std::span<const double> input, const ComparatorConfig& cfg, int rate = 0) {
  if (!(cfg.v_min < cfg.v_max)) throw Error(Errc::InvalidLevels, "v_min must be below v_max");
  if (input.empty()) throw Error(Errc::EmptySequence, "comparator input is empty");
  BinaryWave out;
  out.rate = rate;
  out.values.reserve(input.size());
  const double mid = cfg.mid();
  for (double v : input) {
    const double d = v - cfg.v_th;
    out.values.push_back(d > 0.0 ? cfg.v_max : (d < 0.0 ? cfg.v_min : mid));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bursts

struct Burst {
  double onset_s = 0.0;
  double offset_s = 0.0;
  double peak = 0.0;     // envelope maximum inside the burst ("height")
  double peak_s = 0.0;   // time of that maximum
  double density = 0.0;  // mean envelope over the burst / peak, in (0, 1]
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;

  double duration_s() const noexcept { return offset_s - onset_s; }
};

struct BurstParams {
  double alpha = 0.25;
  double merge_gap_s = 0.03;
  double min_dur_s = 0.05;
  // The envelope maximum must exceed this multiple of the noise floor for any burst to exist.
  double min_contrast = 2.0;
};

namespace detail {
inline constexpr double kTimeSlack = 1e-9;
}

/// Runs of the envelope above noise_floor + alpha·(max - noise_floor), gap-merged and
/// duration-filtered, sorted by onset.
inline std::vector<Burst> detect_bursts(const Envelope& env, const BurstParams& p = {}) {
  if (env.values.empty()) throw Error(Errc::EmptySequence, "envelope is empty");
  const double mx = *std::max_element(env.values.begin(), env.values.end());
  const double floor = env.noise_floor;
  if (!(mx > 0.0) || mx <= floor || (floor > 0.0 && mx < p.min_contrast * floor)) return {};
  const double threshold = floor + p.alpha * (mx - floor);

  struct Run {
    std::size_t first, last;
  };
  std::vector<Run> runs;
  for (std::size_t t = 0; t < env.size(); ++t) {
    if (env.values[t] <= threshold) continue;
    if (!runs.empty() && runs.back().last + 1 == t) runs.back().last = t;
    else runs.push_back({t, t});
  }

  std::vector<Run> merged;
  for (const Run& r : runs) {
    if (!merged.empty()) {
      const double gap_s = static_cast<double>(r.first - merged.back().last - 1) * env.hop_s;
      if (gap_s < p.merge_gap_s - detail::kTimeSlack) {
        merged.back().last = r.last;
        continue;
      }
    }
    merged.push_back(r);
  }

  std::vector<Burst> out;
  for (const Run& r : merged) {
    const std::size_t n = r.last - r.first + 1;
    const double dur = static_cast<double>(n) * env.hop_s;
    if (dur < p.min_dur_s - detail::kTimeSlack) continue;
    Burst b;
    b.first_frame = r.first;
    b.last_frame = r.last;
    b.onset_s = env.frame_centre_s(r.first) - env.hop_s / 2.0;
    b.offset_s = env.frame_centre_s(r.last) + env.hop_s / 2.0;
    double sum = 0.0;
    for (std::size_t t = r.first; t <= r.last; ++t) {
      sum += env.values[t];
      if (env.values[t] > b.peak) {
        b.peak = env.values[t];
        b.peak_s = env.frame_centre_s(t);
      }
    }
    b.density = std::min(1.0, sum / static_cast<double>(n) / b.peak);
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition

/// Ism/Fil/Harf decomposition of one vocalization.
struct VocalPattern {
  Burst ism;
  std::optional<Burst> fil;
  std::optional<double> chirps_s;  // gap from Ism offset to Fil onset
  double harf_level = 0.0;         // median envelope over non-burst frames
  std::optional<double> height_ratio;
};

struct DecomposeOptions {
  double window_s = 0.02;
  double hop_s = 0.01;
  BurstParams bursts{};
};

/// Full decomposition trace, kept for plotting and reports.
struct Decomposition {
  Envelope env;
  std::vector<Burst> bursts;
  VocalPattern pattern;
};

inline std::optional<double> height_ratio(const VocalPattern& p) {
  if (!p.fil) return std::nullopt;
  return p.fil->peak / p.ism.peak;
}

/// Builds the pattern from already-detected bursts. Ism is the highest burst (earliest on ties),
/// Fil the first burst starting after the Ism ends.
inline VocalPattern pattern_from_bursts(const Envelope& env, const std::vector<Burst>& bursts) {
  if (bursts.empty()) throw Error(Errc::NoIsmFound, "no burst rises above the noise floor");
  std::size_t ism_idx = 0;
  for (std::size_t i = 1; i < bursts.size(); ++i)
    if (bursts[i].peak > bursts[ism_idx].peak) ism_idx = i;

  VocalPattern p;
  p.ism = bursts[ism_idx];
  for (std::size_t i = ism_idx + 1; i < bursts.size(); ++i) {
    if (bursts[i].onset_s > p.ism.offset_s - detail::kTimeSlack) {
      p.fil = bursts[i];
      break;
    }
  }
  if (p.fil) p.chirps_s = std::max(0.0, p.fil->onset_s - p.ism.offset_s);
  p.height_ratio = height_ratio(p);

  std::vector<bool> in_burst(env.size(), false);
  for (const Burst& b : bursts)
    for (std::size_t t = b.first_frame; t <= b.last_frame && t < env.size(); ++t) in_burst[t] = true;
  std::vector<double> residual;
  for (std::size_t t = 0; t < env.size(); ++t)
    if (!in_burst[t]) residual.push_back(env.values[t]);
  p.harf_level = residual.empty() ? 0.0 : signal::percentile(std::move(residual), 0.5);
  return p;
}

inline Decomposition decompose_traced(const AudioClip& clip, const DecomposeOptions& opt = {}) {
  Decomposition d;
  d.env = signal::envelope(clip, opt.window_s, opt.hop_s);
  d.bursts = detect_bursts(d.env, opt.bursts);
  d.pattern = pattern_from_bursts(d.env, d.bursts);
  return d;
}

inline VocalPattern decompose(const AudioClip& clip, const DecomposeOptions& opt = {}) {
  return decompose_traced(clip, opt).pattern;
}

// ---------------------------------------------------------------------------
// Reactions and scoring

enum class Reaction { StrongEngagement, Moderate, LowInterest, NoContextualResponse };

constexpr std::string_view reaction_name(Reaction r) noexcept {
  switch (r) {
    case Reaction::StrongEngagement: return "StrongEngagement";
    case Reaction::Moderate: return "Moderate";
    case Reaction::LowInterest: return "LowInterest";
    case Reaction::NoContextualResponse: return "NoContextualResponse";
  }
  return "NoContextualResponse";
}

inline Reaction classify_reaction(std::optional<double> ratio, double hi = 0.6, double lo = 0.2) {
  if (!(0.0 <= lo && lo < hi && hi <= 1.0)) throw Error(Errc::InvalidThresholds, "need 0 <= lo < hi <= 1");
  if (!ratio) return Reaction::NoContextualResponse;
  if (*ratio >= hi) return Reaction::StrongEngagement;
  if (*ratio >= lo) return Reaction::Moderate;
  return Reaction::LowInterest;
}

enum class Squash { Logistic, Identity, Tanh };

struct UlmConfig {
  Squash squash = Squash::Logistic;
  bool chirps_norm = true;
};

inline double apply_squash(Squash s, double x) {
  switch (s) {
    case Squash::Logistic: return 1.0 / (1.0 + std::exp(-x));
    case Squash::Identity: return x;
    case Squash::Tanh: return std::tanh(x);
  }
  return x;
}

/// Harf · f(Ism + Chirps + Fil).
inline double ulm_score(const VocalPattern& p, const UlmConfig& cfg, double clip_dur_s) {
  if (!(clip_dur_s > 0.0)) throw Error(Errc::InvalidArgument, "clip duration must be positive");
  const double ism = p.ism.peak;
  const double fil = p.fil ? p.fil->peak : 0.0;
  double chirps = 0.0;
  if (p.fil && p.chirps_s) chirps = cfg.chirps_norm ? *p.chirps_s / clip_dur_s : *p.chirps_s;
  return p.harf_level * apply_squash(cfg.squash, ism + chirps + fil);
}

// ---------------------------------------------------------------------------
// Height/reaction correlation

struct LabeledRatio {
  double ratio = 0.0;
  bool positive = false;
};

struct CorrelationReport {
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  double mean_positive = 0.0;
  double mean_negative = 0.0;
  double threshold = 0.0;          // predict positive when ratio >= threshold
  double balanced_accuracy = 0.0;
  double auc = 0.0;
  // 2·(positive-above-negative pairs) + tied pairs; auc = auc_numerator / (2·n_pos·n_neg)
  std::uint64_t auc_numerator = 0;
};

inline CorrelationReport correlate_height_reactions(const std::vector<LabeledRatio>& pairs) {
  CorrelationReport rep;
  double sum_pos = 0.0, sum_neg = 0.0;
  for (const auto& p : pairs) {
    if (p.positive) {
      ++rep.n_positive;
      sum_pos += p.ratio;
    } else {
      ++rep.n_negative;
      sum_neg += p.ratio;
    }
  }
  if (rep.n_positive == 0 || rep.n_negative == 0)
    throw Error(Errc::MissingClass, "need at least one positive and one negative ratio");
  rep.mean_positive = sum_pos / static_cast<double>(rep.n_positive);
  rep.mean_negative = sum_neg / static_cast<double>(rep.n_negative);

  std::vector<LabeledRatio> sorted = pairs;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.ratio < b.ratio; });

  // Sweep ascending groups of equal ratio. neg_below counts negatives strictly below the group.
  const auto npos = static_cast<double>(rep.n_positive);
  const auto nneg = static_cast<double>(rep.n_negative);
  std::uint64_t numer = 0, neg_below = 0, pos_below = 0;
  bool have_best = false;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::uint64_t gpos = 0, gneg = 0;
    while (j < sorted.size() && sorted[j].ratio == sorted[i].ratio) {
      (sorted[j].positive ? gpos : gneg) += 1;
      ++j;
    }
    // Threshold at this group's ratio: everything from here up is called positive.
    const double tpr = (npos - static_cast<double>(pos_below)) / npos;
    const double tnr = static_cast<double>(neg_below) / nneg;
    const double ba = 0.5 * (tpr + tnr);
    if (!have_best || ba > rep.balanced_accuracy) {
      rep.balanced_accuracy = ba;
      rep.threshold = sorted[i].ratio;
      have_best = true;
    }
    numer += gpos * (2 * neg_below + gneg);
    neg_below += gneg;
    pos_below += gpos;
    i = j;
  }
  rep.auc_numerator = numer;
  rep.auc = static_cast<double>(numer) / (2.0 * npos * nneg);
  return rep;
}

}  // namespace ulma::segmentation
