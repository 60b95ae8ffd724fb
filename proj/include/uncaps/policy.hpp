#pragma once

#include "uncaps/core.hpp"
#include "uncaps/env.hpp"
#include "uncaps/rff.hpp"
#include "uncaps/unscented.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>
#include <utility>
#include <vector>

namespace uncaps {

/// A parameter-conditioned action oracle: for every θ in [0,1]^d it returns
/// the action of the policy trained for θ. Must be deterministic in (θ, obs).
template <class P>
concept PolicyProvider = requires(const P& p, const Vector& theta, const Vector& observation) {
  { p.action(theta, observation) } -> std::convertible_to<Vector>;
  { p.dimension() } -> std::convertible_to<Eigen::Index>;
};

struct RiccatiSolution {
  Matrix cost_to_go;  // P
  Matrix gain;        // K, u = −K x
  int iterations = 0;
  double residual = 0.0;
};

/// ‖P − (Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA)‖_F.
inline double riccati_residual(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& p) {
  const Matrix bpa = b.transpose() * p * a;
  const Matrix next = q + a.transpose() * p * a - bpa.transpose() * (r + b.transpose() * p * b).ldlt().solve(bpa);
  return (p - next).norm();
}

/// Infinite-horizon discrete-time LQR by fixed-point iteration of the
/// Riccati recursion from P = Q.
inline RiccatiSolution solve_discrete_lqr(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                                          int max_iterations = 10000) {
  require(a.rows() == a.cols() && b.rows() == a.rows(), "solve_discrete_lqr: shape mismatch");
  require(q.rows() == a.rows() && q.cols() == a.cols(), "solve_discrete_lqr: Q shape mismatch");
  require(r.rows() == b.cols() && r.cols() == b.cols(), "solve_discrete_lqr: R shape mismatch");
  RiccatiSolution sol;
  Matrix p = q;
  for (int it = 1; it <= max_iterations; ++it) {
    const Matrix bpa = b.transpose() * p * a;
    const Matrix next = q + a.transpose() * p * a - bpa.transpose() * (r + b.transpose() * p * b).ldlt().solve(bpa);
    if (!next.allFinite()) throw NumericalFailure("solve_discrete_lqr: non-finite cost-to-go");
    const double change = (next - p).norm();
    p = 0.5 * (next + next.transpose());
    if (change <= 1e-13 * std::max(1.0, p.norm())) {
      sol.iterations = it;
      sol.cost_to_go = p;
      sol.gain = (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
      sol.residual = riccati_residual(a, b, q, r, p);
      return sol;
    }
  }
  throw NumericalFailure("solve_discrete_lqr: Riccati iteration did not converge in " +
                         std::to_string(max_iterations) + " steps");
}

/// Analytic stand-in for a universal policy network: the LQR-optimal
/// controller of the simulator at θ, u = −K(θ)(obs − offset(θ) − s*).
///
/// Gains are solved at θ rounded to a 1e-6 grid and memoized in a
/// thread-safe table shared by copies of the provider, so cached and fresh
/// lookups are bit-identical.
class LQRPolicyProvider {
 public:
  LQRPolicyProvider(PlantSpec plant, Matrix q, Matrix r)
      : plant_(std::make_shared<const PlantSpec>(std::move(plant))),
        q_(std::move(q)),
        r_(std::move(r)),
        cache_(std::make_shared<Cache>()) {
    plant_->validate();
    require(q_.rows() == plant_->state_dim && q_.cols() == plant_->state_dim, "LQRPolicyProvider: Q shape");
    require(r_.rows() == plant_->action_dim && r_.cols() == plant_->action_dim, "LQRPolicyProvider: R shape");
  }

  /// Uses the plant's reward weights as the LQR cost.
  explicit LQRPolicyProvider(const PlantSpec& plant) : LQRPolicyProvider(plant, plant.reward_q, plant.reward_r) {}

  const PlantSpec& plant() const { return *plant_; }
  Eigen::Index dimension() const { return plant_->dimension(); }

  static Vector quantize(const Vector& theta) {
    Vector out(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) out[i] = std::round(theta[i] * 1e6) / 1e6;
    return out;
  }

  /// Gain and observation offset at the quantized θ.
  struct Entry {
    Matrix gain;
    Vector offset;
  };

  const Entry& entry(const Vector& theta) const {
    require_dimension(theta, dimension(), "LQRPolicyProvider");
    require(in_unit_cube(theta), "LQRPolicyProvider: theta outside [0,1]^d");
    Key key(static_cast<std::size_t>(theta.size()));
    for (Eigen::Index i = 0; i < theta.size(); ++i) key[static_cast<std::size_t>(i)] = std::llround(theta[i] * 1e6);
    {
      std::shared_lock lock(cache_->mutex);
      const auto it = cache_->table.find(key);
      if (it != cache_->table.end()) return *it->second;
    }
    auto fresh = std::make_unique<Entry>(solve(quantize(theta)));
    std::unique_lock lock(cache_->mutex);
    auto [it, inserted] = cache_->table.try_emplace(std::move(key), std::move(fresh));
    return *it->second;
  }

  /// Solves without touching the cache.
  Entry solve(const Vector& theta) const {
    const LinearDynamics dyn = plant_->dynamics(theta);
    const RiccatiSolution sol = solve_discrete_lqr(dyn.A, dyn.B, q_, r_);
    return Entry{sol.gain, dyn.observation_offset};
  }

  Matrix gain(const Vector& theta) const { return entry(theta).gain; }

  Vector action(const Vector& theta, const Vector& observation) const {
    const Entry& e = entry(theta);
    return -e.gain * (observation - e.offset - plant_->target);
  }

  std::size_t cache_size() const {
    std::shared_lock lock(cache_->mutex);
    return cache_->table.size();
  }

 private:
  using Key = std::vector<std::int64_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = 0x51ed270b27c4ea5dULL;
      for (std::int64_t v : k) h = mix_seed(h ^ static_cast<std::uint64_t>(v));
      return static_cast<std::size_t>(h);
    }
  };
  struct Cache {
    mutable std::shared_mutex mutex;
    std::unordered_map<Key, std::unique_ptr<Entry>, KeyHash> table;
  };

  std::shared_ptr<const PlantSpec> plant_;
  Matrix q_;
  Matrix r_;
  std::shared_ptr<Cache> cache_;
};

inline Matrix lqr_gain(const LQRPolicyProvider& provider, const Vector& theta) { return provider.gain(theta); }

/// Unscented Action Selection: the unscented mean of the provider's actions
/// at the sigma points of N(θ̂, I·σ²), each clamped to the cube.
template <PolicyProvider P>
Vector uas_action(const P& provider, const Vector& theta_hat, double variance, double k, const Vector& observation) {
  require(variance >= 0.0, "uas_action: variance must be >= 0");
  if (variance == 0.0) return provider.action(theta_hat, observation);
  SigmaPointSet sp = sigma_points_isotropic(theta_hat, variance, k);
  sp.clamp_to_cube();
  return unscented_mean([&](const Vector& theta) -> Vector { return provider.action(theta, observation); }, sp);
}

/// Unweighted mean of the provider's actions over every θ* in the set.
template <PolicyProvider P>
Vector averaged_policy_action(const P& provider, const OptimalParamSet& thetas, const Vector& observation) {
  require(!thetas.empty(), "averaged_policy_action: empty parameter set");
  Vector sum = provider.action(thetas.samples.front(), observation);
  for (std::size_t i = 1; i < thetas.size(); ++i) sum += provider.action(thetas.samples[i], observation);
  return sum / static_cast<double>(thetas.size());
}

/// Componentwise mean and isotropic variance (mean of the unbiased
/// componentwise sample variances) of a parameter set.
struct IsotropicGaussianFit {
  Vector mean;
  double variance = 0.0;
};

inline IsotropicGaussianFit fit_isotropic_gaussian(const OptimalParamSet& thetas) {
  require(thetas.size() >= 2, "fit_isotropic_gaussian: need at least 2 samples");
  IsotropicGaussianFit fit;
  fit.mean = thetas.mean();
  Vector ss = Vector::Zero(fit.mean.size());
  for (const Vector& s : thetas.samples) ss += (s - fit.mean).cwiseAbs2();
  fit.variance = (ss / static_cast<double>(thetas.size() - 1)).mean();
  return fit;
}

/// UAS around a Gaussian fitted to the optimal-parameter samples.
template <PolicyProvider P>
Vector ga_action(const P& provider, const OptimalParamSet& thetas, double k, const Vector& observation) {
  require(thetas.size() >= 2, "ga_action: need at least 2 samples");
  const IsotropicGaussianFit fit = fit_isotropic_gaussian(thetas);
  return uas_action(provider, clamp_to_cube(fit.mean), fit.variance, k, observation);
}

}  // namespace uncaps
