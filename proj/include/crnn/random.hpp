#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>

namespace crnn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Generator for sub-stream `stream` of `seed`. Sample i of an estimation run
/// uses stream i, so a run with more samples extends a shorter one.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851F42D4C957F2DULL)));
}

template <typename Rng>
Eigen::VectorXd gaussian_vector(Eigen::Index n, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

/// Uniformly random direction scaled to `norm`.
template <typename Rng>
Eigen::VectorXd random_direction(Eigen::Index n, double norm, Rng& rng) {
  Eigen::VectorXd v = gaussian_vector(n, 1.0, rng);
  double len = v.norm();
  while (len == 0.0) {
    v = gaussian_vector(n, 1.0, rng);
    len = v.norm();
  }
  return v * (norm / len);
}

/// Symmetric Dirichlet(1) sample (uniform on the probability simplex) via
/// normalized exponentials.
template <typename Rng>
Eigen::VectorXd sample_simplex_uniform(Eigen::Index m, Rng& rng) {
  std::exponential_distribution<double> dist(1.0);
  Eigen::VectorXd v(m);
  for (Eigen::Index i = 0; i < m; ++i) v[i] = dist(rng);
  return v / v.sum();
}

}  // namespace crnn
