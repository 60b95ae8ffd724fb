#pragma once

#include "uncaps/core.hpp"
#include "uncaps/env.hpp"
#include "uncaps/policy.hpp"

#include <vector>

namespace uncaps {

/// Domain-randomisation baseline settings. θ is sampled uniformly from the
/// box [lower, upper] inside the unit cube (the full cube unless overridden).
struct DRConfig {
  int samples = 256;
  std::uint64_t seed = 0;
  Vector lower;  // empty = 0
  Vector upper;  // empty = 1
};

/// A single parameter-agnostic linear controller u = −K̄(obs − s*) + c̄,
/// with K̄ the mean gain and c̄ the mean offset correction over the samples.
struct DRController {
  Matrix gain;
  Vector bias;
  Vector target;
  std::vector<Vector> thetas;

  Vector action(const Vector& observation) const { return -gain * (observation - target) + bias; }
};

inline DRController dr_controller(const DRConfig& cfg, const LQRPolicyProvider& provider) {
  require(cfg.samples >= 1, "DRConfig: samples must be >= 1");
  const Eigen::Index d = provider.dimension();
  const Vector lower = cfg.lower.size() ? cfg.lower : Vector(Vector::Zero(d));
  const Vector upper = cfg.upper.size() ? cfg.upper : Vector(Vector::Ones(d));
  require_dimension(lower, d, "DRConfig lower");
  require_dimension(upper, d, "DRConfig upper");
  require(in_unit_cube(lower) && in_unit_cube(upper) && (lower.array() <= upper.array()).all(),
          "DRConfig: bounds must satisfy 0 <= lower <= upper <= 1");

  Rng rng(cfg.seed);
  DRController ctl;
  ctl.target = provider.plant().target;
  for (int j = 0; j < cfg.samples; ++j) {
    const Vector u = uniform_in_cube(d, rng);
    ctl.thetas.push_back(lower + u.cwiseProduct(upper - lower));
  }
  Matrix gain_sum = Matrix::Zero(provider.plant().action_dim, provider.plant().state_dim);
  Vector bias_sum = Vector::Zero(provider.plant().action_dim);
  for (const Vector& theta : ctl.thetas) {
    const auto& entry = provider.entry(theta);
    gain_sum += entry.gain;
    bias_sum += entry.gain * entry.offset;
  }
  ctl.gain = gain_sum / static_cast<double>(cfg.samples);
  ctl.bias = bias_sum / static_cast<double>(cfg.samples);
  return ctl;
}

inline ActionRule dr_policy(const DRConfig& cfg, const LQRPolicyProvider& provider) {
  return [ctl = dr_controller(cfg, provider)](const Vector& obs) { return ctl.action(obs); };
}

}  // namespace uncaps
