#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <numeric>

#include "ulma/random.hpp"
#include "ulma/synth.hpp"
#include "ulma/units.hpp"
#include "ulma/units_refit.hpp"

using namespace ulma;
using namespace ulma::units;

namespace {

struct Blobs {
  Matrix points;
  std::vector<std::size_t> truth;
  Matrix centres;
};

// Three blobs with pairwise centre distance 1.
Blobs three_blobs(std::uint64_t seed, std::size_t per = 200, double sigma = 0.05) {
  Blobs b;
  b.centres = Matrix{{0.0, 0.0}, {1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}};
  b.points = Matrix(3 * per, 2);
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = c * per + i;
      b.points(r, 0) = b.centres(c, 0) + n(rng);
      b.points(r, 1) = b.centres(c, 1) + n(rng);
      b.truth.push_back(c);
    }
  return b;
}

Matrix sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  std::sort(rows.begin(), rows.end());
  return from_rows(rows);
}

Codebook book(Matrix c) {
  Codebook cb;
  cb.centroids = std::move(c);
  return cb;
}

}  // namespace

TEST(KMeans, SingleClusterIsMean) {
  Rng rng(1);
  Matrix x(50, 3);
  fill_normal(x, 1.0, rng);
  const auto cb = kmeans_fit(x, 1, 9);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 50; ++i) mean += x(i, c);
    EXPECT_NEAR(cb.centroids(0, c), mean / 50.0, 1e-12);
  }
}

TEST(KMeans, OnePointPerCluster) {
  const Matrix x{{0, 0}, {1, 5}, {-2, 3}, {4, 4}};
  KMeansTrace tr;
  const auto cb = kmeans_fit(x, 4, 3, {}, &tr);
  EXPECT_EQ(inertia(cb, x), 0.0);
  EXPECT_EQ(tr.inertia.back(), 0.0);
  try {
    kmeans_fit(x, 5, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewPoints);
  }
}

TEST(KMeans, RecoversThreeBlobs) {
  const auto b = three_blobs(42);
  KMeansTrace tr;
  const auto cb = kmeans_fit(b.points, 3, 7, {}, &tr);
  std::array<std::size_t, 3> perm{0, 1, 2}, best{};
  double best_err = 1e300;
  do {
    double err = 0.0;
    for (std::size_t c = 0; c < 3; ++c) err = std::max(err, std::sqrt(squared_distance(cb.centroids.row(perm[c]), b.centres.row(c))));
    if (err < best_err) {
      best_err = err;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_LT(best_err, 0.05);
  const auto labels = assign(cb, b.points);
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(labels[i], best[b.truth[i]]);
  for (std::size_t i = 1; i < tr.inertia.size(); ++i) EXPECT_LE(tr.inertia[i], tr.inertia[i - 1]);
}

TEST(KMeans, InertiaTraceNonIncreasing) {
  Rng rng(5);
  Matrix x(300, 4);
  fill_normal(x, 1.0, rng);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    KMeansTrace tr;
    kmeans_fit(x, 8, seed, {}, &tr);
    ASSERT_GE(tr.inertia.size(), 2u);
    for (std::size_t i = 1; i < tr.inertia.size(); ++i) EXPECT_LE(tr.inertia[i], tr.inertia[i - 1] * (1.0 + 1e-15));
  }
}

TEST(KMeans, DeterministicBytes) {
  const auto b = three_blobs(3);
  const auto c1 = kmeans_fit(b.points, 5, 11);
  const auto c2 = kmeans_fit(b.points, 5, 11);
  ASSERT_EQ(c1.centroids.size(), c2.centroids.size());
  EXPECT_EQ(std::memcmp(c1.centroids.data().data(), c2.centroids.data().data(), c1.centroids.size() * sizeof(double)), 0);
  EXPECT_EQ(c1.seed, 11u);
}

TEST(KMeans, PermutationInvariantCentroidSet) {
  const auto b = three_blobs(8);
  // Canonical pre-sort: any permutation of the rows sorts to the same matrix.
  std::vector<std::size_t> idx(b.points.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(2);
  std::shuffle(idx.begin(), idx.end(), rng);
  Matrix shuffled(b.points.rows(), 2);
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(b.points.row(idx[i]).begin(), b.points.row(idx[i]).end(), shuffled.row(i).begin());
  const auto a = kmeans_fit(sorted_rows(b.points), 3, 4);
  const auto c = kmeans_fit(sorted_rows(shuffled), 3, 4);
  const auto sa = sorted_rows(a.centroids), sc = sorted_rows(c.centroids);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_NEAR(sa.data()[i], sc.data()[i], 1e-9);

  // Without the pre-sort, separated blobs still converge to the same set.
  const auto raw = sorted_rows(kmeans_fit(shuffled, 3, 4).centroids);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_NEAR(sa.data()[i], raw.data()[i], 1e-9);
}

TEST(Assign, ExamplesAndTies) {
  const auto cb = book(Matrix{{0, 0}, {5, 5}, {2, 0}});
  EXPECT_EQ(assign(cb, Matrix{{5, 5}}), std::vector<std::size_t>{1});
  EXPECT_EQ(assign(cb, Matrix{{1, 0}}), std::vector<std::size_t>{0});  // equidistant from 0 and 2
  EXPECT_EQ(assign(cb, cb.centroids), (std::vector<std::size_t>{0, 1, 2}));
  try {
    assign(cb, Matrix{{1, 2, 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimMismatch);
  }
  EXPECT_THROW(inertia(cb, Matrix{{1, 2, 3}}), Error);
}

TEST(Assign, LloydStepDoesNotIncreaseInertia) {
  Rng rng(6);
  Matrix x(200, 3);
  fill_normal(x, 1.0, rng);
  Matrix c(6, 3);
  fill_normal(c, 1.0, rng);
  auto cb = book(c);
  const double before = inertia(cb, x);
  const auto labels = assign(cb, x);
  Matrix next = cb.centroids;
  std::vector<std::size_t> counts(6, 0);
  for (std::size_t j = 0; j < 6; ++j)
    if (std::count(labels.begin(), labels.end(), j) > 0) next.row(j)[0] = next.row(j)[1] = next.row(j)[2] = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    ++counts[labels[i]];
    for (std::size_t d = 0; d < 3; ++d) next(labels[i], d) += x(i, d);
  }
  for (std::size_t j = 0; j < 6; ++j)
    if (counts[j] > 0)
      for (double& v : next.row(j)) v /= static_cast<double>(counts[j]);
  EXPECT_LE(inertia(book(next), x), before);
}

TEST(Inertia, ExamplesAndBruteForce) {
  EXPECT_EQ(inertia(book(Matrix{{1, 1}}), Matrix{{1, 1}, {1, 1}}), 0.0);
  EXPECT_EQ(inertia(book(Matrix{{0, 0}}), Matrix{{2, 0}}), 4.0);

  Rng rng(12);
  Matrix x(100, 5), c(4, 5);
  fill_normal(x, 1.0, rng);
  fill_normal(c, 1.0, rng);
  double brute = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < c.rows(); ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < 5; ++d) s += (x(i, d) - c(j, d)) * (x(i, d) - c(j, d));
      best = std::min(best, s);
    }
    brute += best;
  }
  EXPECT_NEAR(inertia(book(c), x), brute, 1e-12 * brute);
}

TEST(AlignLabels, NearestCentre) {
  // Source grid: 10 ms hop centred at 12.5 ms; target: 20 ms hop centred at 10 ms.
  std::vector<std::size_t> src(10);
  std::iota(src.begin(), src.end(), 0);
  const auto out = align_labels(src, 0.01, 0.0125, 6, 0.02, 0.01);
  EXPECT_EQ(out, (std::vector<std::size_t>{0, 2, 4, 6, 8, 9}));
  EXPECT_THROW(align_labels({}, 0.01, 0.0, 3, 0.02, 0.0), Error);
}

TEST(Refit, HiddenStateCodebook) {
  Rng rng(21);
  const auto corpus = synth::markov_unit_corpus(10, rng, 0.5);
  model::EncoderModel m(model::EncoderConfig{}, 4);
  const auto a = refit_from_hidden(m, corpus.clips, 1, 4, 13);
  const auto b = refit_from_hidden(m, corpus.clips, 1, 4, 13);
  EXPECT_EQ(a.stage, 2);
  EXPECT_EQ(a.layer, 1);
  EXPECT_EQ(a.dim(), m.config.d_model);
  EXPECT_EQ(a.centroids, b.centroids);

  std::vector<std::size_t> counts(4, 0);
  for (const auto& c : corpus.clips)
    for (std::size_t l : assign(a, m.hidden(c, 1))) {
      ASSERT_LT(l, 4u);
      ++counts[l];
    }
  for (std::size_t n : counts) EXPECT_GT(n, 0u);

  try {
    refit_from_hidden(m, corpus.clips, 2, 4, 13);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LayerOutOfRange);
  }
  try {
    refit_from_hidden(m, std::span(corpus.clips).first(1), 0, 100, 13);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewPoints);
  }
}
