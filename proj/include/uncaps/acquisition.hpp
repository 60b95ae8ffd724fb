#pragma once

#include "uncaps/core.hpp"
#include "uncaps/gp.hpp"
#include "uncaps/optimize.hpp"
#include "uncaps/unscented.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace uncaps {

/// Inputs shared by EI and UEI. All quantities live in the GP's
/// standardized output space; `noise_variance` is the isotropic input-noise
/// variance in normalized parameter units.
struct AcquisitionContext {
  const GPModel* model = nullptr;
  double y_best = 0.0;
  double noise_variance = 0.0;
  UTConfig ut;
};

inline AcquisitionContext make_acquisition_context(const GPModel& model, double noise_variance, double k = 2.0) {
  require(noise_variance >= 0.0, "AcquisitionContext: noise variance must be >= 0");
  AcquisitionContext ctx;
  ctx.model = &model;
  ctx.y_best = model.standardized_targets().maxCoeff();
  ctx.noise_variance = noise_variance;
  ctx.ut = UTConfig{k, model.dimension()};
  ctx.ut.validate();
  return ctx;
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// E[max(Y - y_best, 0)] for Y ~ N(mean, sd²), maximization convention.
inline double expected_improvement(double mean, double sd, double y_best) {
  const double gain = mean - y_best;
  if (sd < 1e-12) return std::max(gain, 0.0);
  const double z = gain / sd;
  return std::max(gain * normal_cdf(z) + sd * normal_pdf(z), 0.0);
}

inline double expected_improvement(const AcquisitionContext& ctx, const Vector& x) {
  const auto [mean, var] = ctx.model->posterior_standardized(x);
  return expected_improvement(mean, std::sqrt(var), ctx.y_best);
}

/// EI averaged over the sigma points of N(x, I·σ²), with sigma points
/// clamped to the cube. Reduces to EI(x) when σ² = 0.
inline double unscented_ei(const AcquisitionContext& ctx, const Vector& x) {
  if (ctx.noise_variance == 0.0) return expected_improvement(ctx, x);
  SigmaPointSet sp = sigma_points_isotropic(x, ctx.noise_variance, ctx.ut.k);
  sp.clamp_to_cube();
  return unscented_mean([&](const Vector& p) { return expected_improvement(ctx, p); }, sp);
}

/// Multi-restart maximization of an acquisition over [0,1]^d.
template <class Acquisition>
Vector maximize_acquisition(Acquisition&& acq, Eigen::Index d, int restarts, Rng& rng, int candidate_pool = 0) {
  AscentOptions opt;
  opt.restarts = restarts;
  opt.candidate_pool = candidate_pool;
  return maximize_on_cube(acq, d, opt, rng);
}

}  // namespace uncaps
