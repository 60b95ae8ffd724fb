#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace uncaps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Pseudo-random generator used throughout the library. Every stochastic
/// operation takes one by reference so runs are reproducible from a seed.
using Rng = std::mt19937_64;

/// Raised when a factorization or fixed-point iteration cannot be completed
/// (non-PD matrix after maximal jitter, Riccati non-convergence, non-finite
/// rollout state).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when every start point of a multi-restart optimization failed.
class OptimizationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer; used to derive independent streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of sub-stream `stream` of `base`. Distinct (base, stream) pairs give
/// statistically independent generators.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline Rng derive_rng(std::uint64_t base, std::uint64_t stream) {
  return Rng(derive_seed(base, stream));
}

inline bool in_unit_cube(const Vector& x) {
  return (x.array() >= 0.0).all() && (x.array() <= 1.0).all();
}

inline Vector clamp_to_cube(const Vector& x) {
  return x.cwiseMax(0.0).cwiseMin(1.0);
}

inline Vector uniform_in_cube(Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = unif(rng);
  return x;
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline void require_dimension(const Vector& x, Eigen::Index d, const char* what) {
  if (x.size() != d) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " +
                                std::to_string(d) + ", got " + std::to_string(x.size()) + ")");
  }
}

}  // namespace uncaps
