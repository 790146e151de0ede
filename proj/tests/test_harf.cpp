#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ulma/harf.hpp"

using namespace ulma;
using namespace ulma::harf;

TEST(Parabola, Examples) {
  const auto flat = parabola_through({0, 0}, {1, 0}, 0.0);
  EXPECT_EQ(flat.a, 0.0);
  EXPECT_EQ(flat.b, 0.0);
  EXPECT_EQ(flat.c, 0.0);

  const auto bowl = parabola_through({0, 0}, {1, 0}, 0.25);
  EXPECT_NEAR(bowl.a, 1.0, 1e-15);
  EXPECT_NEAR(bowl.b, -1.0, 1e-15);
  EXPECT_NEAR(bowl.c, 0.0, 1e-15);

  const auto level = parabola_through({0, 1}, {2, 1}, 0.0);
  for (double t : {0.0, 0.5, 1.3, 2.0}) EXPECT_NEAR(level(t), 1.0, 1e-15);

  try {
    parabola_through({1, 0}, {1, 2}, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateSpan);
  }
}

TEST(Parabola, ReproducesAnchorsAndSag) {
  for (double sag : {-0.7, 0.0, 0.01, 0.4, 3.0}) {
    const Anchor p1{0.3, 0.8}, p2{1.9, -0.2};
    const auto p = parabola_through(p1, p2, sag);
    EXPECT_NEAR(p(p1.t), p1.h, 1e-12);
    EXPECT_NEAR(p(p2.t), p2.h, 1e-12);
    EXPECT_NEAR(p(1.1), 0.5 * (p1.h + p2.h) - sag, 1e-12);
  }
}

TEST(ArcLength, Lines) {
  EXPECT_NEAR(arc_length(parabola_through({0, 0}, {1, 0}, 0.0)), 1.0, 1e-12);
  EXPECT_NEAR(arc_length(parabola_through({0, 0}, {3, 4}, 0.0)), 5.0, 1e-12);
}

TEST(ArcLength, ParabolaMatchesClosedForm) {
  // y = x² − x on [0, 1]: (√2 + asinh 1) / 2.
  const auto p = parabola_through({0, 0}, {1, 0}, 0.25);
  const double closed = (std::sqrt(2.0) + std::asinh(1.0)) / 2.0;
  EXPECT_NEAR(oracle::parabola_arc(1.0, -1.0, 0.0, 1.0), closed, 1e-15);
  EXPECT_NEAR(arc_length(p), closed, 1e-12);

  // y = x² on [0, 1].
  Parabola q;
  q.a = 1.0;
  q.t1 = 0.0;
  q.t2 = 1.0;
  EXPECT_NEAR(arc_length(q), 1.478942857544597, 1e-12);
  EXPECT_NEAR(arc_length(q), oracle::parabola_arc(1.0, 0.0, 0.0, 1.0), 1e-12);

  for (double sag : {0.05, 0.3, 2.0}) {
    const auto r = parabola_through({-1.0, 0.2}, {2.0, 1.0}, sag);
    EXPECT_NEAR(arc_length(r), oracle::parabola_arc(r.a, r.b, r.t1, r.t2), 1e-11);
  }
}

TEST(ArcLength, IncreasesWithSagMagnitude) {
  const Anchor p1{0, 0}, p2{1, 0.5};
  const double chord = chord_length(p1, p2);
  EXPECT_NEAR(arc_length(parabola_through(p1, p2, 0.0)), chord, 1e-12);
  double prev = chord;
  for (int i = 1; i <= 40; ++i) {
    const double s = 0.05 * i;
    const double up = arc_length(parabola_through(p1, p2, s));
    const double down = arc_length(parabola_through(p1, p2, -s));
    EXPECT_GT(up, prev);
    EXPECT_NEAR(up, down, 1e-11);
    prev = up;
  }
}

TEST(FitSag, Examples) {
  const Anchor a{0, 0}, b{1, 0};
  const auto exact = fit_sag(a, b, 1.0);
  EXPECT_EQ(exact.sag, 0.0);
  EXPECT_LE(exact.residual, 1e-9);

  try {
    fit_sag(a, b, 0.99);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InfeasibleLength);
  }

  const auto r = fit_sag(a, b, 1.1);
  EXPECT_NEAR(arc_length(parabola_through(a, b, r.sag)), 1.1, 1e-9);
  EXPECT_LE(r.residual, 1e-9);
  EXPECT_GT(r.iterations, 0u);
}

TEST(FitSag, RoundTripAcrossTargets) {
  for (const auto& [p1, p2] : {std::pair<Anchor, Anchor>{{0, 0}, {1, 0}}, {{0.2, 0.9}, {0.75, 0.45}}, {{-3, 2}, {4, -1}}}) {
    const double chord = chord_length(p1, p2);
    for (double f : {1.0, 1.01, 1.5, 3.0}) {
      const auto r = fit_sag(p1, p2, f * chord);
      EXPECT_LE(std::abs(arc_length(r.curve) - f * chord), 1e-9) << f;
      EXPECT_GE(r.sag, 0.0);
    }
  }
}

TEST(FitSag, IterationBudget) {
  try {
    fit_sag({0, 0}, {1, 0}, 1.5, 1e-9, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoConvergence);
  }
}

TEST(Render, Examples) {
  const auto p = parabola_through({0, 0}, {1, 0}, 0.25);
  const auto two = render_harf(p, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].first, 0.0);
  EXPECT_NEAR(two[0].second, 0.0, 1e-12);
  EXPECT_EQ(two[1].first, 1.0);
  EXPECT_NEAR(two[1].second, 0.0, 1e-12);

  const auto three = render_harf(p, 3);
  EXPECT_DOUBLE_EQ(three[1].first, 0.5);
  EXPECT_NEAR(three[1].second, -0.25, 1e-15);

  const auto q = parabola_through({0.1, 0.3}, {0.9, -0.4}, 0.2);
  for (std::size_t n : {2u, 7u, 101u}) {
    const auto pts = render_harf(q, n);
    EXPECT_EQ(pts.size(), n);
    EXPECT_NEAR(pts.front().second, 0.3, 1e-12);
    EXPECT_NEAR(pts.back().second, -0.4, 1e-12);
    EXPECT_EQ(pts.back().first, 0.9);
  }
  EXPECT_THROW(render_harf(q, 1), Error);
}
