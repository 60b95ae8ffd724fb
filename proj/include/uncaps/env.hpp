#pragma once

#include "uncaps/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace uncaps {

/// Maps an observation to an action.
using ActionRule = std::function<Vector(const Vector& observation)>;

struct ParamRange {
  double lower = 0.0;
  double upper = 1.0;
};

/// Discrete-time linear plant s' = A s + B u. The controller observes
/// s + observation_offset.
struct LinearDynamics {
  Matrix A;
  Matrix B;
  Vector observation_offset;
};

/// θ-parameterized linear simulator with a negative quadratic reward.
struct PlantSpec {
  Eigen::Index state_dim = 0;
  Eigen::Index action_dim = 0;
  std::vector<ParamRange> ranges;  // one per latent component, affine from [0,1]
  std::function<LinearDynamics(const Vector& physical)> build;
  Vector target;
  Matrix reward_q;  // PSD, state_dim × state_dim
  Matrix reward_r;  // PD, action_dim × action_dim
  double dt = 0.05;
  std::vector<std::string> parameter_names;

  Eigen::Index dimension() const { return static_cast<Eigen::Index>(ranges.size()); }

  void validate() const {
    require(state_dim >= 1 && action_dim >= 1, "PlantSpec: empty state or action");
    require(!ranges.empty(), "PlantSpec: no latent parameters");
    for (const ParamRange& r : ranges) require(r.lower < r.upper, "PlantSpec: range lower must be < upper");
    require(static_cast<bool>(build), "PlantSpec: missing dynamics builder");
    require_dimension(target, state_dim, "PlantSpec target");
    require(reward_q.rows() == state_dim && reward_q.cols() == state_dim, "PlantSpec: reward_q shape");
    require(reward_r.rows() == action_dim && reward_r.cols() == action_dim, "PlantSpec: reward_r shape");
    require(Eigen::LLT<Matrix>(reward_r).info() == Eigen::Success, "PlantSpec: reward_r must be PD");
  }

  /// Strictly increasing affine map from the unit cube to physical units.
  Vector to_physical(const Vector& theta) const {
    require_dimension(theta, dimension(), "PlantSpec::to_physical");
    Vector p(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const ParamRange& r = ranges[static_cast<std::size_t>(i)];
      p[i] = r.lower + theta[i] * (r.upper - r.lower);
    }
    return p;
  }

  LinearDynamics dynamics(const Vector& theta) const {
    require(in_unit_cube(theta), "PlantSpec::dynamics: theta outside [0,1]^d");
    LinearDynamics dyn = build(to_physical(theta));
    if (dyn.observation_offset.size() == 0) dyn.observation_offset = Vector::Zero(state_dim);
    if (!dyn.A.allFinite() || !dyn.B.allFinite()) throw NumericalFailure("PlantSpec::dynamics: non-finite matrices");
    return dyn;
  }

  /// Stage reward −(s − s*)ᵀQ(s − s*) − uᵀRu; zero at (s*, 0), negative elsewhere.
  double reward(const Vector& s, const Vector& u) const {
    const Vector e = s - target;
    return -e.dot(reward_q * e) - u.dot(reward_r * u);
  }
};

struct StepResult {
  Vector state;
  double reward = 0.0;
};

namespace detail {

inline StepResult linear_step(const PlantSpec& plant, const LinearDynamics& dyn, const Vector& s, const Vector& u) {
  require_dimension(s, plant.state_dim, "step state");
  require_dimension(u, plant.action_dim, "step action");
  StepResult out{dyn.A * s + dyn.B * u, plant.reward(s, u)};
  if (!out.state.allFinite() || !std::isfinite(out.reward)) throw NumericalFailure("step: non-finite result");
  return out;
}

}  // namespace detail

/// Deterministic simulator transition at θ. The reward is the stage reward
/// of the pre-transition state and the applied action.
inline StepResult sim_step(const PlantSpec& plant, const Vector& theta, const Vector& s, const Vector& u) {
  return detail::linear_step(plant, plant.dynamics(theta), s, u);
}

/// The simulator pinned at θ, usable as a rollout environment.
class SimEnvironment {
 public:
  SimEnvironment(const PlantSpec& plant, const Vector& theta)
      : plant_(&plant), theta_(theta), dyn_(plant.dynamics(theta)) {}

  const PlantSpec& plant() const { return *plant_; }
  const Vector& theta() const { return theta_; }
  StepResult step(const Vector& s, const Vector& u, Rng&) const { return detail::linear_step(*plant_, dyn_, s, u); }
  Vector observe(const Vector& s) const { return s + dyn_.observation_offset; }

 private:
  const PlantSpec* plant_;
  Vector theta_;
  LinearDynamics dyn_;
};

/// Noisy twin: the plant at hidden θ_r with i.i.d. N(0, σ²) noise added to
/// every state component after each transition.
class RealWorldSpec {
 public:
  RealWorldSpec(PlantSpec plant, Vector theta_r, double noise_std)
      : plant_(std::move(plant)), theta_r_(std::move(theta_r)), noise_std_(noise_std) {
    plant_.validate();
    require_dimension(theta_r_, plant_.dimension(), "RealWorldSpec theta_r");
    require(in_unit_cube(theta_r_), "RealWorldSpec: theta_r outside [0,1]^d");
    require(noise_std_ >= 0.0 && std::isfinite(noise_std_), "RealWorldSpec: noise std must be >= 0");
    dyn_ = plant_.dynamics(theta_r_);
  }

  const PlantSpec& plant() const { return plant_; }
  const Vector& theta_r() const { return theta_r_; }
  double noise_std() const { return noise_std_; }

  StepResult step(const Vector& s, const Vector& u, Rng& rng) const {
    StepResult out = detail::linear_step(plant_, dyn_, s, u);
    if (noise_std_ > 0.0) {
      std::normal_distribution<double> normal(0.0, noise_std_);
      for (Eigen::Index i = 0; i < out.state.size(); ++i) out.state[i] += normal(rng);
    }
    return out;
  }
  Vector observe(const Vector& s) const { return s + dyn_.observation_offset; }

 private:
  PlantSpec plant_;
  Vector theta_r_;
  double noise_std_;
  LinearDynamics dyn_;
};

inline StepResult real_step(const RealWorldSpec& world, const Vector& s, const Vector& u, Rng& rng) {
  return world.step(s, u, rng);
}

struct EpisodeConfig {
  int horizon = 100;
  /// Fixed initial state; when empty the state is drawn uniformly from the
  /// box target ± init_half_width.
  std::optional<Vector> initial_state;
  Vector init_half_width;
  std::uint64_t seed = 0;
};

/// Runs `horizon` steps applying `policy` to the observation at each step
/// and returns the cumulative reward. Deterministic given cfg.seed.
template <class Env>
double rollout(const Env& env, const ActionRule& policy, const EpisodeConfig& cfg) {
  require(cfg.horizon >= 1, "rollout: horizon must be >= 1");
  const PlantSpec& plant = env.plant();
  Rng rng(cfg.seed);
  Vector s;
  if (cfg.initial_state) {
    s = *cfg.initial_state;
  } else {
    require_dimension(cfg.init_half_width, plant.state_dim, "rollout init_half_width");
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    s = plant.target;
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] += cfg.init_half_width[i] * unif(rng);
  }
  double total = 0.0;
  for (int t = 0; t < cfg.horizon; ++t) {
    const Vector u = policy(env.observe(s));
    StepResult r = env.step(s, u, rng);
    total += r.reward;
    s = std::move(r.state);
  }
  if (!std::isfinite(total)) throw NumericalFailure("rollout: non-finite cumulative reward");
  return total;
}

struct JumpstartResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> episode_rewards;
};

/// Mean and standard error of the cumulative reward over `episodes`
/// random-initial-state episodes; episode e uses seed derive_seed(base, e)
/// with `base` drawn from rng. Standard error is 0 for a single episode.
inline JumpstartResult jumpstart_eval(const RealWorldSpec& world, const ActionRule& policy, int episodes,
                                      int horizon, const Vector& init_half_width, Rng& rng) {
  require(episodes >= 1, "jumpstart_eval: episodes must be >= 1");
  const std::uint64_t base = rng();
  JumpstartResult out;
  out.episode_rewards.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    EpisodeConfig cfg{horizon, std::nullopt, init_half_width, derive_seed(base, static_cast<std::uint64_t>(e))};
    out.episode_rewards.push_back(rollout(world, policy, cfg));
  }
  double sum = 0.0;
  for (double r : out.episode_rewards) sum += r;
  out.mean = sum / static_cast<double>(episodes);
  if (episodes > 1) {
    double ss = 0.0;
    for (double r : out.episode_rewards) ss += (r - out.mean) * (r - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(episodes - 1)) / std::sqrt(static_cast<double>(episodes));
  }
  return out;
}

// --- Default plant -----------------------------------------------------------

/// Physical parameters of the mass-spring-damper, in the order they may be
/// made latent.
inline const std::array<std::string, 5>& msd_parameter_names() {
  static const std::array<std::string, 5> names{"mass", "spring", "damping", "actuator_gain", "sensor_offset"};
  return names;
}

struct MassSpringDamperOptions {
  /// Names of the latent parameters (subset of msd_parameter_names()).
  std::vector<std::string> latent{"mass", "spring", "damping"};
  /// Values of the non-latent parameters, in msd_parameter_names() order.
  std::array<double, 5> nominal{1.0, 2.0, 0.3, 1.0, 0.0};
  std::array<ParamRange, 5> ranges{ParamRange{0.5, 2.0}, ParamRange{0.5, 5.0}, ParamRange{0.05, 1.0},
                                   ParamRange{0.5, 1.5}, ParamRange{-0.2, 0.2}};
  double dt = 0.05;
  Vector reward_q = (Vector(2) << 1.0, 0.1).finished();  // diagonal
  double reward_r = 0.01;
};

/// 1-DOF mass-spring-damper, forward Euler at dt: state (position, velocity),
/// action force scaled by the actuator gain; the sensor offset biases the
/// observed position.
inline PlantSpec make_mass_spring_damper(const MassSpringDamperOptions& opt = {}) {
  const auto& names = msd_parameter_names();
  std::vector<int> slots;
  PlantSpec plant;
  for (const std::string& name : opt.latent) {
    const auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), "make_mass_spring_damper: unknown parameter '" + name + "'");
    const int slot = static_cast<int>(it - names.begin());
    require(std::find(slots.begin(), slots.end(), slot) == slots.end(),
            "make_mass_spring_damper: duplicate parameter '" + name + "'");
    slots.push_back(slot);
    plant.ranges.push_back(opt.ranges[static_cast<std::size_t>(slot)]);
    plant.parameter_names.push_back(name);
  }
  require_dimension(opt.reward_q, 2, "make_mass_spring_damper reward_q");
  const double dt = opt.dt;
  const std::array<double, 5> nominal = opt.nominal;
  plant.state_dim = 2;
  plant.action_dim = 1;
  plant.dt = dt;
  plant.target = Vector::Zero(2);
  plant.reward_q = opt.reward_q.asDiagonal();
  plant.reward_r = Matrix::Constant(1, 1, opt.reward_r);
  plant.build = [slots, nominal, dt](const Vector& physical) {
    std::array<double, 5> p = nominal;
    for (std::size_t i = 0; i < slots.size(); ++i) p[static_cast<std::size_t>(slots[i])] = physical[static_cast<Eigen::Index>(i)];
    const double mass = p[0], spring = p[1], damping = p[2], gain = p[3], offset = p[4];
    LinearDynamics dyn;
    dyn.A.resize(2, 2);
    dyn.A << 1.0, dt, -dt * spring / mass, 1.0 - dt * damping / mass;
    dyn.B.resize(2, 1);
    dyn.B << 0.0, dt * gain / mass;
    dyn.observation_offset = (Vector(2) << offset, 0.0).finished();
    return dyn;
  };
  plant.validate();
  return plant;
}

}  // namespace uncaps
