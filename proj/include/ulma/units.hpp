#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/matrix.hpp"

namespace ulma::units {

/// k centroids of dimension d. Stage 1 comes from MFCC frames, stage 2 from encoder hidden states.
struct Codebook {
  Matrix centroids;  // k × dim
  int stage = 1;
  std::uint64_t seed = 0;
  int layer = -1;  // encoder layer the stage-2 features were taken from

  std::size_t k() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }
};

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-8;
};

struct KMeansTrace {
  std::vector<double> inertia;  // objective after each assignment step
  std::size_t iterations = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
inline std::vector<std::size_t> assign(const Codebook& cb, const Matrix& features) {
  if (features.cols() != cb.dim()) throw Error(Errc::DimMismatch, "feature dim differs from codebook dim");
  std::vector<std::size_t> labels(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cb.k(); ++j) {
      const double d = squared_distance(features.row(i), cb.centroids.row(j));
      if (d < best) {
        best = d;
        labels[i] = j;
      }
    }
  }
  return labels;
}

inline double inertia(const Codebook& cb, const Matrix& features) {
  const auto labels = assign(cb, features);
  double s = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) s += squared_distance(features.row(i), cb.centroids.row(labels[i]));
  return s;
}

namespace detail {

inline Matrix kmeanspp_init(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Matrix c(k, x.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t first = pick(rng);
  std::copy(x.row(first).begin(), x.row(first).end(), c.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), c.row(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      double r = unit(rng) * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    std::copy(x.row(chosen).begin(), x.row(chosen).end(), c.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), c.row(j)));
  }
  return c;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are re-seeded at the point
/// currently farthest from its assigned centroid.
inline Codebook kmeans_fit(const Matrix& features, std::size_t k, std::uint64_t seed, const KMeansOptions& opt = {},
                           KMeansTrace* trace = nullptr) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (k < 1 || n < k) throw Error(Errc::TooFewPoints, std::to_string(n) + " points for k=" + std::to_string(k));

  std::mt19937_64 rng(seed);
  Codebook cb;
  cb.seed = seed;
  cb.centroids = detail::kmeanspp_init(features, k, rng);

  std::vector<std::size_t> labels(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double dd = squared_distance(features.row(i), cb.centroids.row(j));
        if (dd < best) {
          best = dd;
          labels[i] = j;
        }
      }
      dist[i] = best;
      total += best;
    }
    if (trace) {
      trace->inertia.push_back(total);
      trace->iterations = iter + 1;
    }

    Matrix next(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      auto dst = next.row(labels[i]);
      auto src = features.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        std::copy(features.row(far).begin(), features.row(far).end(), next.row(j).begin());
        dist[far] = 0.0;
        continue;
      }
      for (double& v : next.row(j)) v /= static_cast<double>(counts[j]);
    }

    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) shift = std::max(shift, squared_distance(next.row(j), cb.centroids.row(j)));
    cb.centroids = std::move(next);
    if (std::sqrt(shift) < opt.tol) break;
  }
  if (trace) trace->inertia.push_back(inertia(cb, features));
  return cb;
}

/// Resamples frame labels between frame grids by nearest frame centre. Frame i of a grid is
/// centred at offset_s + i·hop_s.
inline std::vector<std::size_t> align_labels(std::span<const std::size_t> src, double src_hop_s, double src_offset_s,
                                             std::size_t n_dst, double dst_hop_s, double dst_offset_s) {
  if (src.empty()) throw Error(Errc::EmptySequence, "no source labels to align");
  std::vector<std::size_t> out(n_dst);
  for (std::size_t t = 0; t < n_dst; ++t) {
    const double centre = dst_offset_s + static_cast<double>(t) * dst_hop_s;
    const double idx = std::round((centre - src_offset_s) / src_hop_s);
    const auto j = static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(src.size() - 1)));
    out[t] = src[j];
  }
  return out;
}

}  // namespace ulma::units
