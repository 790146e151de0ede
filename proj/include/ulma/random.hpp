#pragma once

#include <cstdint>
#include <random>

#include "ulma/matrix.hpp"

namespace ulma {

using Rng = std::mt19937_64;

inline void fill_normal(Matrix& m, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : m.data()) v = dist(rng);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace ulma
