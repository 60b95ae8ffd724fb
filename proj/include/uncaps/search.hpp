#pragma once

#include "uncaps/acquisition.hpp"
#include "uncaps/core.hpp"
#include "uncaps/env.hpp"
#include "uncaps/gp.hpp"
#include "uncaps/policy.hpp"
#include "uncaps/rff.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uncaps {

enum class Variant { StandardBO, UncAPSMinusEP, UncAPSPlusGA, UncAPS };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::StandardBO: return "StandardBO";
    case Variant::UncAPSMinusEP: return "UncAPS-EP";
    case Variant::UncAPSPlusGA: return "UncAPS+GA";
    case Variant::UncAPS: return "UncAPS";
  }
  throw std::invalid_argument("unknown variant");
}

inline Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::StandardBO, Variant::UncAPSMinusEP, Variant::UncAPSPlusGA, Variant::UncAPS}) {
    if (name == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

inline bool uses_unscented(Variant v) { return v != Variant::StandardBO; }
inline bool uses_latent_distribution(Variant v) { return v == Variant::UncAPS || v == Variant::UncAPSPlusGA; }

enum class HyperparamMode { Fixed, Evidence };

struct SearchConfig {
  int iterations = 25;  // T
  int n_init = 3;
  Variant variant = Variant::UncAPS;
  /// Assumed environment-noise variance σ² in normalized parameter units.
  double noise_variance = 0.0;
  double ut_k = 2.0;
  int n_samples = 250;    // N
  int n_features = 2000;  // M
  GPHyperparams gp;
  HyperparamMode hyper_mode = HyperparamMode::Fixed;
  int hyper_restarts = 10;
  HyperparamBounds hyper_bounds;
  int acq_restarts = 50;
  int acq_pool = 0;
  int latent_restarts = 20;
  int latent_pool = 200;
  /// Evaluation window length and its fixed initial state.
  int horizon = 100;
  Vector initial_state;
  std::uint64_t seed = 0;

  void validate() const {
    require(iterations >= 1, "SearchConfig: T must be >= 1");
    require(n_init >= 1, "SearchConfig: n_init must be >= 1");
    require(noise_variance >= 0.0, "SearchConfig: noise variance must be >= 0");
    require(n_samples >= 1 && n_features >= 1, "SearchConfig: N and M must be >= 1");
    require(acq_restarts >= 1 && latent_restarts >= 1, "SearchConfig: restarts must be >= 1");
    require(horizon >= 1, "SearchConfig: horizon must be >= 1");
    gp.validate();
  }
};

struct IterationRecord {
  int iteration = 0;
  Vector theta;
  double y = 0.0;
  double best_y = 0.0;
  double wall_seconds = 0.0;
};

struct SearchTrace {
  Variant variant = Variant::StandardBO;
  std::vector<IterationRecord> records;
  std::optional<OptimalParamSet> optimal;
  GPHyperparams final_hyperparams;
  int real_evaluations = 0;

  /// Index of the highest observed y; the earliest record wins ties.
  std::size_t best_index() const {
    require(!records.empty(), "SearchTrace: empty trace");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i) {
      if (records[i].y > records[best].y) best = i;
    }
    return best;
  }
  const Vector& best_theta() const { return records[best_index()].theta; }
  double best_y() const { return records[best_index()].y; }
};

namespace detail {

// Stream ids under the master seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kLatentStream = 2;
constexpr std::uint64_t kEvaluationStream = 1000;
constexpr std::uint64_t kIterationStream = 100000;

inline GPModel fit_surrogate(const ObservationSet& data, const SearchConfig& cfg, Rng& rng) {
  if (cfg.hyper_mode == HyperparamMode::Evidence) {
    return fit(data, optimize_hyperparams(data, cfg.gp, cfg.hyper_restarts, rng, cfg.hyper_bounds));
  }
  return fit(data, cfg.gp);
}

}  // namespace detail

/// The policy used to score θ during search: UAS for the unscented
/// variants, the plain action otherwise.
template <PolicyProvider P>
ActionRule search_action_rule(const P& provider, const SearchConfig& cfg, const Vector& theta) {
  if (uses_unscented(cfg.variant)) {
    return [provider, theta, var = cfg.noise_variance, k = cfg.ut_k](const Vector& obs) {
      return uas_action(provider, theta, var, k, obs);
    };
  }
  return [provider, theta](const Vector& obs) { return provider.action(theta, obs); };
}

/// BO policy search over simulation parameters.
///
/// Draws n_init uniform θ, then for T iterations fits the GP, maximizes EI
/// (StandardBO) or UEI (other variants), and scores the policy fetched at
/// the suggestion on one fixed-initial-state window of the real world.
/// UncAPS and UncAPS+GA finish by sampling the optimal-parameter
/// distribution. All randomness derives from cfg.seed, and evaluation i uses
/// the same noise stream for every variant.
template <PolicyProvider P>
SearchTrace policy_search(const SearchConfig& cfg, const P& provider, const RealWorldSpec& world) {
  cfg.validate();
  const Eigen::Index d = provider.dimension();
  require(world.plant().dimension() == d, "policy_search: provider/world dimension mismatch");
  const Vector init_state = cfg.initial_state.size() ? cfg.initial_state : Vector(world.plant().target);
  require_dimension(init_state, world.plant().state_dim, "policy_search initial state");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  SearchTrace trace;
  trace.variant = cfg.variant;
  ObservationSet data(d);

  auto evaluate = [&](const Vector& theta) {
    const int index = static_cast<int>(trace.records.size());
    EpisodeConfig episode{cfg.horizon, init_state, Vector(),
                          derive_seed(cfg.seed, detail::kEvaluationStream + static_cast<std::uint64_t>(index))};
    const double y = rollout(world, search_action_rule(provider, cfg, theta), episode);
    ++trace.real_evaluations;
    data.add(theta, y);
    IterationRecord rec;
    rec.iteration = index;
    rec.theta = theta;
    rec.y = y;
    rec.best_y = trace.records.empty() ? y : std::max(trace.records.back().best_y, y);
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    trace.records.push_back(std::move(rec));
  };

  Rng init_rng = derive_rng(cfg.seed, detail::kInitStream);
  for (int i = 0; i < cfg.n_init; ++i) evaluate(uniform_in_cube(d, init_rng));

  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng = derive_rng(cfg.seed, detail::kIterationStream + static_cast<std::uint64_t>(it));
    try {
      const GPModel model = detail::fit_surrogate(data, cfg, rng);
      const AcquisitionContext ctx = make_acquisition_context(model, cfg.noise_variance, cfg.ut_k);
      Vector next;
      if (uses_unscented(cfg.variant)) {
        next = maximize_acquisition([&](const Vector& x) { return unscented_ei(ctx, x); }, d, cfg.acq_restarts, rng,
                                    cfg.acq_pool);
      } else {
        next = maximize_acquisition([&](const Vector& x) { return expected_improvement(ctx, x); }, d,
                                    cfg.acq_restarts, rng, cfg.acq_pool);
      }
      evaluate(next);
    } catch (const std::exception& e) {
      throw NumericalFailure("policy_search: iteration " + std::to_string(it) + ": " + e.what());
    }
  }

  Rng final_rng = derive_rng(cfg.seed, detail::kIterationStream + static_cast<std::uint64_t>(cfg.iterations));
  const GPModel final_model = detail::fit_surrogate(data, cfg, final_rng);
  trace.final_hyperparams = final_model.hyperparams();
  if (uses_latent_distribution(cfg.variant)) {
    LatentDistOptions opt;
    opt.samples = cfg.n_samples;
    opt.features = cfg.n_features;
    opt.restarts = cfg.latent_restarts;
    opt.candidate_pool = cfg.latent_pool;
    Rng latent_rng = derive_rng(cfg.seed, detail::kLatentStream);
    trace.optimal = opt_latent_dist(data, trace.final_hyperparams, opt, latent_rng);
  }
  return trace;
}

/// Transfer policy of a finished search:
///   StandardBO  plain action at the best observed θ;
///   UncAPS-EP   UAS at the best observed θ;
///   UncAPS      actions averaged over Θ*;
///   UncAPS+GA   UAS around a Gaussian fitted to Θ*.
template <PolicyProvider P>
ActionRule final_policy(const SearchTrace& trace, const P& provider, const SearchConfig& cfg) {
  require(trace.variant == cfg.variant, "final_policy: trace variant does not match config");
  switch (cfg.variant) {
    case Variant::StandardBO: {
      const Vector theta = trace.best_theta();
      return [provider, theta](const Vector& obs) { return provider.action(theta, obs); };
    }
    case Variant::UncAPSMinusEP: {
      const Vector theta = trace.best_theta();
      return [provider, theta, var = cfg.noise_variance, k = cfg.ut_k](const Vector& obs) {
        return uas_action(provider, theta, var, k, obs);
      };
    }
    case Variant::UncAPS: {
      require(trace.optimal && !trace.optimal->empty(), "final_policy: UncAPS trace has no optimal-parameter set");
      return [provider, set = *trace.optimal](const Vector& obs) { return averaged_policy_action(provider, set, obs); };
    }
    case Variant::UncAPSPlusGA: {
      require(trace.optimal && trace.optimal->size() >= 2, "final_policy: UncAPS+GA needs at least 2 samples");
      return [provider, set = *trace.optimal, k = cfg.ut_k](const Vector& obs) {
        return ga_action(provider, set, k, obs);
      };
    }
  }
  throw std::invalid_argument("final_policy: invalid variant");
}

}  // namespace uncaps
