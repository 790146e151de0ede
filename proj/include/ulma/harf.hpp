#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "ulma/error.hpp"

// Harf curve synthesis: a parabola hung between the Ism and Fil anchors, with the
// mid-span sag found by bisection so that the curve reaches a target arc length.

namespace ulma::harf {

struct Anchor {
  double t = 0.0;  // horizontal position, seconds
  double h = 0.0;  // amplitude
};

/// y(t) = a·t² + b·t + c on [t1, t2].
struct Parabola {
  double a = 0.0, b = 0.0, c = 0.0;
  double t1 = 0.0, t2 = 1.0;

  double operator()(double t) const noexcept { return (a * t + b) * t + c; }
  double slope(double t) const noexcept { return 2.0 * a * t + b; }
};

struct SagFitResult {
  double sag = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;
  Parabola curve;
};

/// Unique quadratic through both anchors whose mid-span point lies `sag` below the chord midpoint.
inline Parabola parabola_through(const Anchor& p1, const Anchor& p2, double sag) {
  if (!(p1.t < p2.t)) throw Error(Errc::DegenerateSpan, "anchors must satisfy t1 < t2");
  const double span = p2.t - p1.t;
  const double slope = (p2.h - p1.h) / span;
  // chord(t) - 4·sag·(t - t1)(t2 - t)/span², expanded.
  Parabola p;
  p.a = 4.0 * sag / (span * span);
  p.b = slope - p.a * (p1.t + p2.t);
  p.c = p1.h - slope * p1.t + p.a * p1.t * p2.t;
  p.t1 = p1.t;
  p.t2 = p2.t;
  return p;
}

namespace detail {

inline double simpson(double fa, double fm, double fb, double h) { return h / 6.0 * (fa + 4.0 * fm + fb); }

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(fa, flm, fm, m - a);
  const double right = simpson(fm, frm, fb, b - m);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12,
                        int max_depth = 50) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return detail::adaptive_simpson(f, a, b, fa, fm, fb, detail::simpson(fa, fm, fb, b - a), tol, max_depth);
}

/// Curve length ∫ sqrt(1 + y'(t)²) dt over the span.
inline double arc_length(const Parabola& p) {
  return integrate([&p](double t) { const double s = p.slope(t); return std::sqrt(1.0 + s * s); }, p.t1, p.t2);
}

inline double chord_length(const Anchor& p1, const Anchor& p2) { return std::hypot(p2.t - p1.t, p2.h - p1.h); }

/// Bisection on sag ∈ [0, upper]; upper doubles from the span width until L(upper) ≥ target.
inline SagFitResult fit_sag(const Anchor& p1, const Anchor& p2, double target_len, double tol = 1e-9,
                            std::size_t max_iter = 200) {
  const double chord = chord_length(p1, p2);
  if (target_len < chord - 1e-12) throw Error(Errc::InfeasibleLength, "target length shorter than the chord");
  auto length_at = [&](double sag) { return arc_length(parabola_through(p1, p2, sag)); };

  SagFitResult res;
  const double l0 = length_at(0.0);
  if (std::abs(l0 - target_len) <= tol) {
    res.curve = parabola_through(p1, p2, 0.0);
    res.residual = std::abs(l0 - target_len);
    return res;
  }

  double lo = 0.0;
  double hi = p2.t - p1.t;
  while (length_at(hi) < target_len) {
    lo = hi;
    hi *= 2.0;
    if (++res.iterations >= max_iter) throw Error(Errc::NoConvergence, "could not bracket the target length");
  }
  for (;;) {
    const double mid = 0.5 * (lo + hi);
    const double lm = length_at(mid);
    ++res.iterations;
    if (std::abs(lm - target_len) <= tol) {
      res.sag = mid;
      res.residual = std::abs(lm - target_len);
      res.curve = parabola_through(p1, p2, mid);
      return res;
    }
    if (res.iterations >= max_iter || hi - lo <= 0.0)
      throw Error(Errc::NoConvergence, "bisection exceeded the iteration budget");
    (lm < target_len ? lo : hi) = mid;
  }
}

/// n equally spaced samples over the span, both ends included.
inline std::vector<std::pair<double, double>> render_harf(const Parabola& p, std::size_t n) {
  if (n < 2) throw Error(Errc::BadSampleCount, "need at least two samples");
  std::vector<std::pair<double, double>> out;
  out.reserve(n);
  const double step = (p.t2 - p.t1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i + 1 == n ? p.t2 : p.t1 + step * static_cast<double>(i);
    out.emplace_back(t, p(t));
  }
  return out;
}

}  // namespace ulma::harf
