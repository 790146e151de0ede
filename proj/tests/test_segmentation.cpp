#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "ulma/segmentation.hpp"
#include "ulma/synth.hpp"

using namespace ulma;
using namespace ulma::segmentation;

namespace {

Envelope plateau_env(std::vector<std::pair<double, double>> spans, double level, double floor, double dur = 1.0) {
  Envelope e;
  e.hop_s = 0.01;
  e.window_s = 0.02;
  const auto n = static_cast<std::size_t>(std::lround(dur / e.hop_s)) - 1;
  e.values.assign(n, floor);
  for (std::size_t t = 0; t < n; ++t) {
    const double c = e.frame_centre_s(t);
    for (auto [a, b] : spans)
      if (c > a && c < b) e.values[t] = level;
  }
  e.noise_floor = signal::percentile(e.values, 0.1);
  return e;
}

Errc error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::IoError;
}

}  // namespace

TEST(Comparator, ConstantInputs) {
  const ComparatorConfig cfg{0.25, 1.0, -1.0};
  std::vector<double> above(7, 1.25), at(7, 0.25);
  for (double v : comparator(above, cfg).values) EXPECT_EQ(v, 1.0);
  for (double v : comparator(at, cfg).values) EXPECT_EQ(v, 0.0);
}

TEST(Comparator, SinePeriodMatchesSamplewiseOracle) {
  std::vector<double> x;
  for (int i = 0; i < 16; ++i) x.push_back(std::sin(2.0 * std::numbers::pi * i / 16.0));
  x[0] = 0.0;
  x[8] = 0.0;  // exact zero crossings
  const auto w = comparator(x, {0.0, 1.0, 0.0}, 16);
  EXPECT_EQ(w.rate, 16);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double want = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? 0.0 : 0.5);
    EXPECT_EQ(w.values[i], want) << i;
  }
}

TEST(Comparator, Errors) {
  std::vector<double> x{0.1};
  EXPECT_EQ(error_of([&] { comparator(x, {0.0, 1.0, 1.0}); }), Errc::InvalidLevels);
  EXPECT_EQ(error_of([&] { comparator(x, {0.0, -1.0, 1.0}); }), Errc::InvalidLevels);
  EXPECT_EQ(error_of([&] { comparator(std::vector<double>{}, {}); }), Errc::EmptySequence);
}

TEST(Comparator, AlphabetMonotonicityAndReversal) {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> x(10000);
  for (double& v : x) v = std::round(u(rng) * 8.0) / 8.0;  // coarse grid so some samples hit v_th exactly
  const ComparatorConfig cfg{0.5, 0.75, -0.3};
  const auto w = comparator(x, cfg);
  for (double v : w.values) EXPECT_TRUE(v == cfg.v_min || v == cfg.mid() || v == cfg.v_max);

  std::size_t prev = x.size() + 1;
  for (double th = -2.5; th <= 2.5; th += 0.125) {
    const auto out = comparator(x, {th, 1.0, -1.0}).values;
    const auto highs = static_cast<std::size_t>(std::count(out.begin(), out.end(), 1.0));
    EXPECT_LE(highs, prev);
    prev = highs;
  }

  std::vector<double> r(x.rbegin(), x.rend());
  auto wr = comparator(r, cfg).values;
  std::reverse(wr.begin(), wr.end());
  EXPECT_EQ(wr, w.values);
}

TEST(Bursts, SinglePlateau) {
  const auto e = plateau_env({{0.2, 0.4}}, 1.0, 0.05);
  const auto b = detect_bursts(e);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_NEAR(b[0].onset_s, 0.2, e.hop_s);
  EXPECT_NEAR(b[0].offset_s, 0.4, e.hop_s);
  EXPECT_EQ(b[0].peak, 1.0);
  EXPECT_DOUBLE_EQ(b[0].density, 1.0);
}

TEST(Bursts, FlatEnvelopeHasNone) {
  EXPECT_TRUE(detect_bursts(plateau_env({}, 1.0, 0.05)).empty());
  EXPECT_THROW(detect_bursts(Envelope{}), Error);
}

TEST(Bursts, ShortGapIsMerged) {
  // Two plateaus with one frame (centre 0.30 s) below threshold between them.
  Envelope e = plateau_env({{0.195, 0.295}, {0.305, 0.455}}, 1.0, 0.05);
  std::size_t below = 0;
  for (std::size_t t = 19; t < 45; ++t) below += e.values[t] < 1.0;
  ASSERT_EQ(below, 1u);
  const auto b = detect_bursts(e);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_NEAR(b[0].onset_s, 0.2, e.hop_s);
  EXPECT_NEAR(b[0].offset_s, 0.45, e.hop_s);
}

TEST(Bursts, RandomEnvelopesSatisfyInvariants) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const BurstParams p;
  for (int trial = 0; trial < 200; ++trial) {
    Envelope e;
    e.hop_s = 0.01;
    e.window_s = 0.02;
    for (int t = 0; t < 100; ++t) e.values.push_back(u(rng) < 0.7 ? 0.02 * u(rng) : u(rng));
    e.noise_floor = signal::percentile(e.values, 0.1);
    const auto b = detect_bursts(e, p);
    for (std::size_t i = 0; i < b.size(); ++i) {
      EXPECT_LT(b[i].onset_s, b[i].offset_s);
      EXPECT_GE(b[i].duration_s(), p.min_dur_s - 1e-9);
      EXPECT_GT(b[i].peak, 0.0);
      EXPECT_GT(b[i].density, 0.0);
      EXPECT_LE(b[i].density, 1.0);
      if (i > 0) EXPECT_LE(b[i - 1].offset_s, b[i].onset_s + 1e-12);
    }
  }
}

TEST(Decompose, TwoBurstClip) {
  Rng rng(5);
  const auto clip = synth::two_burst_clip(rng, 0.9, 0.5);
  const auto d = decompose_traced(clip);
  const double hop = d.env.hop_s;
  const auto& p = d.pattern;
  ASSERT_TRUE(p.fil.has_value());
  EXPECT_NEAR(p.ism.onset_s, 0.2, hop);
  EXPECT_NEAR(p.ism.offset_s, 0.4, hop);
  EXPECT_NEAR(p.fil->onset_s, 0.7, hop);
  EXPECT_NEAR(p.fil->offset_s, 0.8, hop);
  ASSERT_TRUE(p.chirps_s.has_value());
  EXPECT_NEAR(*p.chirps_s, 0.3, hop);
  ASSERT_TRUE(p.height_ratio.has_value());
  EXPECT_NEAR(*p.height_ratio, 0.5, 0.02);
  EXPECT_GE(p.ism.peak, p.fil->peak);
  EXPECT_GE(p.harf_level, 0.0);
  EXPECT_LT(p.harf_level, 0.01);
}

TEST(Decompose, SingleBurstHasNoFil) {
  Rng rng(6);
  const auto clip = synth::burst_clip({{0.3, 0.6, 0.7}}, 1.0, rng);
  const auto p = decompose(clip);
  EXPECT_FALSE(p.fil.has_value());
  EXPECT_FALSE(p.chirps_s.has_value());
  EXPECT_FALSE(p.height_ratio.has_value());
}

TEST(Decompose, NoiseOnlyHasNoIsm) {
  Rng rng(7);
  const auto clip = synth::noise_clip(rng);
  EXPECT_EQ(error_of([&] { decompose(clip); }), Errc::NoIsmFound);
}

TEST(Decompose, FilIsFirstBurstAfterIsm) {
  // Louder burst in the middle: the earlier quiet burst is neither Ism nor Fil.
  Rng rng(8);
  const auto clip = synth::burst_clip({{0.05, 0.15, 0.3}, {0.3, 0.5, 0.9}, {0.6, 0.7, 0.35}, {0.8, 0.9, 0.6}}, 1.0, rng);
  const auto p = decompose(clip);
  EXPECT_NEAR(p.ism.onset_s, 0.3, 0.01);
  ASSERT_TRUE(p.fil.has_value());
  EXPECT_NEAR(p.fil->onset_s, 0.6, 0.01);
  EXPECT_GT(*p.height_ratio, 0.0);
  EXPECT_LE(*p.height_ratio, 1.0);
}

TEST(HeightRatio, Examples) {
  VocalPattern p;
  p.ism.peak = 1.0;
  EXPECT_FALSE(height_ratio(p).has_value());
  p.fil = Burst{};
  p.fil->peak = 0.5;
  EXPECT_EQ(*height_ratio(p), 0.5);
  p.fil->peak = 1.0;
  EXPECT_EQ(*height_ratio(p), 1.0);
}

TEST(Reaction, RulesAndThresholds) {
  EXPECT_EQ(classify_reaction(0.7), Reaction::StrongEngagement);
  EXPECT_EQ(classify_reaction(0.6), Reaction::StrongEngagement);
  EXPECT_EQ(classify_reaction(0.3), Reaction::Moderate);
  EXPECT_EQ(classify_reaction(0.2), Reaction::Moderate);
  EXPECT_EQ(classify_reaction(0.1), Reaction::LowInterest);
  EXPECT_EQ(classify_reaction(std::nullopt), Reaction::NoContextualResponse);
  EXPECT_EQ(error_of([] { classify_reaction(0.5, 0.2, 0.6); }), Errc::InvalidThresholds);
  EXPECT_EQ(error_of([] { classify_reaction(0.5, 1.5, 0.2); }), Errc::InvalidThresholds);
  EXPECT_EQ(error_of([] { classify_reaction(0.5, 0.6, -0.1); }), Errc::InvalidThresholds);
  for (int i = 0; i <= 100; ++i) {
    const auto r = classify_reaction(i / 100.0);
    EXPECT_NE(r, Reaction::NoContextualResponse);
  }
}

TEST(Ulm, Examples) {
  VocalPattern p;
  p.ism.peak = 1.0;
  p.fil = Burst{};
  p.fil->peak = 0.5;
  p.chirps_s = 0.3;
  p.harf_level = 0.0;
  EXPECT_EQ(ulm_score(p, {}, 1.0), 0.0);

  p.harf_level = 0.1;
  EXPECT_NEAR(ulm_score(p, {}, 1.0), 0.1 / (1.0 + std::exp(-1.8)), 1e-15);
  EXPECT_NEAR(ulm_score(p, {}, 1.0), 0.0858149, 1e-7);
  EXPECT_NEAR(ulm_score(p, {}, 2.0), 0.1 / (1.0 + std::exp(-1.65)), 1e-15);
  EXPECT_NEAR(ulm_score(p, {Squash::Logistic, false}, 2.0), 0.1 / (1.0 + std::exp(-1.8)), 1e-15);
  EXPECT_NEAR(ulm_score(p, {Squash::Identity, true}, 1.0), 0.18, 1e-15);
  EXPECT_NEAR(ulm_score(p, {Squash::Tanh, true}, 1.0), 0.1 * std::tanh(1.8), 1e-15);

  VocalPattern z;
  z.harf_level = 0.4;
  z.ism.peak = 0.0;
  EXPECT_EQ(ulm_score(z, {}, 1.0), 0.2);
  EXPECT_THROW(ulm_score(z, {}, 0.0), Error);
}

TEST(Ulm, MonotoneInEachTerm) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto sq : {Squash::Logistic, Squash::Identity, Squash::Tanh}) {
    for (int i = 0; i < 100; ++i) {
      VocalPattern p;
      p.harf_level = u(rng);
      p.ism.peak = u(rng);
      p.fil = Burst{};
      p.fil->peak = u(rng) * p.ism.peak;
      p.chirps_s = u(rng);
      const double base = ulm_score(p, {sq, true}, 1.0);
      for (int field = 0; field < 3; ++field) {
        VocalPattern q = p;
        (field == 0 ? q.harf_level : field == 1 ? q.ism.peak : q.fil->peak) += 0.1;
        EXPECT_GE(ulm_score(q, {sq, true}, 1.0), base);
      }
    }
  }
}

TEST(Correlation, PerfectSeparationAndTies) {
  std::vector<LabeledRatio> pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back({0.9, true});
  for (int i = 0; i < 7; ++i) pairs.push_back({0.1, false});
  const auto r = correlate_height_reactions(pairs);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_GT(r.threshold, 0.1);
  EXPECT_LE(r.threshold, 0.9);
  EXPECT_EQ(r.balanced_accuracy, 1.0);
  EXPECT_NEAR(r.mean_positive, 0.9, 1e-15);
  EXPECT_NEAR(r.mean_negative, 0.1, 1e-15);

  std::vector<LabeledRatio> ties{{0.4, true}, {0.4, false}, {0.4, true}};
  EXPECT_EQ(correlate_height_reactions(ties).auc, 0.5);
}

TEST(Correlation, MissingClass) {
  EXPECT_EQ(error_of([] { correlate_height_reactions({{0.5, true}}); }), Errc::MissingClass);
  EXPECT_EQ(error_of([] { correlate_height_reactions({}); }), Errc::MissingClass);
}

TEST(Correlation, MatchesBruteForceAndIsAntisymmetric) {
  Rng rng(11);
  std::uniform_int_distribution<int> grid(0, 20);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledRatio> pairs;
    std::vector<double> r;
    std::vector<bool> pos;
    for (int i = 0; i < 40; ++i) {
      const double v = grid(rng) / 20.0;  // coarse values force ties
      const bool p = (i % 2 == 0) || uniform01(rng) < 0.3;
      pairs.push_back({v, p});
      r.push_back(v);
      pos.push_back(p);
    }
    const auto a = correlate_height_reactions(pairs);
    EXPECT_NEAR(a.auc, oracle::brute_auc(r, pos), 1e-15);
    EXPECT_GE(a.auc, 0.0);
    EXPECT_LE(a.auc, 1.0);

    auto flipped = pairs;
    for (auto& p : flipped) p.positive = !p.positive;
    const auto b = correlate_height_reactions(flipped);
    EXPECT_EQ(a.auc_numerator + b.auc_numerator, 2 * a.n_positive * a.n_negative);
    EXPECT_EQ(a.auc + b.auc, 1.0);
  }
}

TEST(Correlation, RandomLabelsNearChance) {
  Rng rng(2024);
  std::vector<LabeledRatio> pairs;
  for (int i = 0; i < 1000; ++i) pairs.push_back({uniform01(rng), uniform01(rng) < 0.5});
  EXPECT_NEAR(correlate_height_reactions(pairs).auc, 0.5, 0.06);
}

TEST(Correlation, ThresholdTiesGoLow) {
  // Thresholds 0.2 and 0.4 both reach balanced accuracy 0.75; the lower one wins.
  std::vector<LabeledRatio> pairs{{0.3, false}, {0.4, true}, {0.1, false}, {0.2, true}};
  const auto r = correlate_height_reactions(pairs);
  EXPECT_EQ(r.threshold, 0.2);
  EXPECT_EQ(r.balanced_accuracy, 0.75);
}

TEST(Correlation, OrderInsensitive) {
  Rng rng(4);
  std::vector<LabeledRatio> pairs;
  for (int i = 0; i < 200; ++i) pairs.push_back({uniform01(rng), uniform01(rng) < 0.4});
  const auto a = correlate_height_reactions(pairs);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto b = correlate_height_reactions(pairs);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_EQ(a.threshold, b.threshold);
  EXPECT_NEAR(a.mean_positive, b.mean_positive, 1e-12);
  EXPECT_NEAR(a.mean_negative, b.mean_negative, 1e-12);
}
