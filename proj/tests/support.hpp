#pragma once

#include <random>
#include <span>
#include <vector>

#include "tenet/rng.hpp"

namespace tenet::test {

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace tenet::test
