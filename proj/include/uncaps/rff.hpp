#pragma once

#include "uncaps/core.hpp"
#include "uncaps/gp.hpp"
#include "uncaps/optimize.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace uncaps {

/// Random Fourier feature map φ(θ) = a·sqrt(2/m)·cos(Ωθ + b) approximating an
/// RBF kernel. The amplitude a = sqrt(signal_variance) carries the kernel
/// scale, so φ(x)ᵀφ(y) ≈ k(x, y) with a unit-variance prior on the weights.
struct RFFMap {
  Matrix omegas;  // m × d, one spectral frequency per row
  Vector phases;  // m, in [0, 2π]
  double amplitude = 1.0;

  Eigen::Index feature_count() const { return omegas.rows(); }
  Eigen::Index dimension() const { return omegas.cols(); }
  double feature_scale() const { return amplitude * std::sqrt(2.0 / static_cast<double>(feature_count())); }
};

/// One approximate GP draw f(θ) = φ(θ)ᵀŵ.
struct LinearGPSample {
  RFFMap map;
  Vector weights;

  double operator()(const Vector& theta) const;
  /// Value and gradient in one pass.
  double value_and_gradient(const Vector& theta, Vector& grad) const;
  /// Value, gradient and Hessian in one pass.
  double value_gradient_hessian(const Vector& theta, Vector& grad, Matrix& hess) const;
};

/// Samples of the location of the maximum of posterior function draws.
struct OptimalParamSet {
  std::vector<Vector> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Eigen::Index dimension() const { return samples.empty() ? 0 : samples.front().size(); }
  Vector mean() const {
    require(!samples.empty(), "OptimalParamSet::mean: empty set");
    Vector m = Vector::Zero(dimension());
    for (const Vector& s : samples) m += s;
    return m / static_cast<double>(samples.size());
  }
};

/// Draws ω ~ N(0, I/lengthscale²) (the RBF spectral density) and b ~ U[0, 2π].
inline RFFMap sample_rff_map(const GPHyperparams& h, Eigen::Index d, Eigen::Index m, Rng& rng) {
  require(m >= 1, "sample_rff_map: feature count must be >= 1");
  require(d >= 1, "sample_rff_map: dimension must be >= 1");
  h.validate();
  std::normal_distribution<double> normal(0.0, 1.0 / h.lengthscale);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
  RFFMap map;
  map.omegas.resize(m, d);
  map.phases.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) map.omegas(j, i) = normal(rng);
    map.phases[j] = unif(rng);
  }
  map.amplitude = std::sqrt(h.signal_variance);
  return map;
}

inline Vector features(const RFFMap& map, const Vector& theta) {
  require_dimension(theta, map.dimension(), "features");
  return map.feature_scale() * (map.omegas * theta + map.phases).array().cos().matrix();
}

/// Φ with one feature row per observation (n × m).
inline Matrix feature_matrix(const RFFMap& map, const std::vector<Vector>& thetas) {
  const auto n = static_cast<Eigen::Index>(thetas.size());
  Matrix x(map.dimension(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require_dimension(thetas[static_cast<std::size_t>(i)], map.dimension(), "feature_matrix");
    x.col(i) = thetas[static_cast<std::size_t>(i)];
  }
  Matrix z = map.omegas * x;
  z.colwise() += map.phases;
  return map.feature_scale() * z.array().cos().matrix().transpose();
}

inline double LinearGPSample::operator()(const Vector& theta) const {
  require_dimension(theta, map.dimension(), "LinearGPSample");
  const Vector z = map.omegas * theta + map.phases;
  double value = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) value += weights[j] * std::cos(z[j]);
  return map.feature_scale() * value;
}

inline double LinearGPSample::value_and_gradient(const Vector& theta, Vector& grad) const {
  require_dimension(theta, map.dimension(), "LinearGPSample");
  const Vector z = map.omegas * theta + map.phases;
  const double c = map.feature_scale();
  Vector sw(z.size());
  double value = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    // Same argument for sin and cos; compilers fuse these into one sincos call.
    const double s = std::sin(z[j]);
    const double co = std::cos(z[j]);
    value += weights[j] * co;
    sw[j] = weights[j] * s;
  }
  grad = -c * (map.omegas.transpose() * sw);
  return c * value;
}

inline double LinearGPSample::value_gradient_hessian(const Vector& theta, Vector& grad, Matrix& hess) const {
  const Eigen::Index d = map.dimension();
  require_dimension(theta, d, "LinearGPSample");
  const Vector z = map.omegas * theta + map.phases;
  const double c = map.feature_scale();
  grad = Vector::Zero(d);
  hess = Matrix::Zero(d, d);
  double value = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double ws = weights[j] * std::sin(z[j]);
    const double wc = weights[j] * std::cos(z[j]);
    value += wc;
    for (Eigen::Index a = 0; a < d; ++a) {
      const double oa = map.omegas(j, a);
      grad[a] -= ws * oa;
      for (Eigen::Index b = 0; b <= a; ++b) hess(a, b) -= wc * oa * map.omegas(j, b);
    }
  }
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < a; ++b) hess(b, a) = hess(a, b);
  }
  grad *= c;
  hess *= c;
  return c * value;
}

/// Draws ŵ ~ N(A⁻¹Φᵀy, σ_N²A⁻¹) with A = ΦᵀΦ + σ_N²I, y the standardized
/// targets. When m ≤ n the m×m system is factorized directly; otherwise the
/// exact same distribution is sampled through the n×n dual system
/// ŵ = w₀ + Φᵀ(ΦΦᵀ + σ_N²I)⁻¹(y − Φw₀ − ε), w₀ ~ N(0, I), ε ~ N(0, σ_N²I).
inline LinearGPSample sample_posterior_weights(const RFFMap& map, const ObservationSet& data,
                                               double noise_variance, Rng& rng) {
  require(!data.empty(), "sample_posterior_weights: observation set is empty");
  require(noise_variance > 0.0 && std::isfinite(noise_variance),
          "sample_posterior_weights: noise variance must be > 0");
  require(data.dimension() == map.dimension(), "sample_posterior_weights: dimension mismatch");

  const Eigen::Index m = map.feature_count();
  const auto n = static_cast<Eigen::Index>(data.size());
  const Matrix phi = feature_matrix(map, data.thetas());
  const Vector y = Standardizer::fit(data.targets()).apply(data.targets());
  std::normal_distribution<double> normal(0.0, 1.0);

  LinearGPSample sample{map, Vector()};
  if (m <= n) {
    Matrix a = phi.transpose() * phi;
    a.diagonal().array() += noise_variance;
    const auto [l, jitter] = detail::cholesky_with_jitter(a);
    (void)jitter;
    const Vector mean = l.transpose().triangularView<Eigen::Upper>().solve(
        l.triangularView<Eigen::Lower>().solve(phi.transpose() * y));
    Vector z(m);
    for (Eigen::Index j = 0; j < m; ++j) z[j] = normal(rng);
    // Cov = σ²A⁻¹ = σ² L⁻ᵀL⁻¹, so σ L⁻ᵀ z has the right covariance.
    sample.weights = mean + std::sqrt(noise_variance) * l.transpose().triangularView<Eigen::Upper>().solve(z);
  } else {
    Vector w0(m);
    for (Eigen::Index j = 0; j < m; ++j) w0[j] = normal(rng);
    Vector eps(n);
    for (Eigen::Index i = 0; i < n; ++i) eps[i] = std::sqrt(noise_variance) * normal(rng);
    Matrix g = phi * phi.transpose();
    g.diagonal().array() += noise_variance;
    const auto [l, jitter] = detail::cholesky_with_jitter(g);
    (void)jitter;
    const Vector residual = y - phi * w0 - eps;
    const Vector beta = l.transpose().triangularView<Eigen::Upper>().solve(
        l.triangularView<Eigen::Lower>().solve(residual));
    sample.weights = w0 + phi.transpose() * beta;
  }
  return sample;
}

/// Settings for the optimal-parameter distribution estimate.
struct LatentDistOptions {
  int samples = 250;     // N
  int features = 2000;   // M
  int restarts = 20;
  int candidate_pool = 200;
};

/// For each of N posterior function draws (fresh feature map each), finds
/// argmax over [0,1]^d. Sample i uses its own stream derived from one seed
/// drawn from `rng`, so the result is ordered by sample index and
/// reproducible.
inline OptimalParamSet opt_latent_dist(const ObservationSet& data, const GPHyperparams& h,
                                       const LatentDistOptions& opt, Rng& rng) {
  require(!data.empty(), "opt_latent_dist: observation set is empty");
  require(opt.samples >= 1, "opt_latent_dist: N must be >= 1");
  require(opt.features >= 1, "opt_latent_dist: M must be >= 1");
  h.validate();
  const std::uint64_t base = rng();
  const Eigen::Index d = data.dimension();
  // Posterior sampling needs strictly positive observation noise.
  const double noise = std::max(h.noise_variance, 1e-10);

  OptimalParamSet out;
  out.samples.reserve(static_cast<std::size_t>(opt.samples));
  AscentOptions ascent;
  ascent.restarts = opt.restarts;
  ascent.candidate_pool = opt.candidate_pool;
  ascent.step_tolerance = 1e-7;
  for (int i = 0; i < opt.samples; ++i) {
    Rng stream = derive_rng(base, static_cast<std::uint64_t>(i));
    try {
      const RFFMap map = sample_rff_map(h, d, opt.features, stream);
      const LinearGPSample f = sample_posterior_weights(map, data, noise, stream);
      out.samples.push_back(maximize_on_cube_with_hessian(
          [&f](const Vector& x) { return f(x); },
          [&f](const Vector& x, Vector& g, Matrix& hs) { return f.value_gradient_hessian(x, g, hs); }, d, ascent,
          stream));
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("opt_latent_dist: sample " + std::to_string(i) + ": " + e.what());
    } catch (const OptimizationFailure& e) {
      throw OptimizationFailure("opt_latent_dist: sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

inline OptimalParamSet opt_latent_dist(const ObservationSet& data, int n_samples, int n_features,
                                       const GPHyperparams& h, Rng& rng) {
  LatentDistOptions opt;
  opt.samples = n_samples;
  opt.features = n_features;
  return opt_latent_dist(data, h, opt, rng);
}

}  // namespace uncaps
