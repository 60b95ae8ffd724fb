#pragma once

#include "uncaps/core.hpp"
#include "uncaps/optimize.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace uncaps {

/// RBF kernel hyperparameters. Signal and noise variances are expressed in
/// standardized output units (the GP standardizes its targets).
struct GPHyperparams {
  double lengthscale = 0.2;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;

  void validate() const {
    require(lengthscale > 0.0 && std::isfinite(lengthscale), "GPHyperparams: lengthscale must be > 0");
    require(signal_variance > 0.0 && std::isfinite(signal_variance),
            "GPHyperparams: signal_variance must be > 0");
    require(noise_variance >= 0.0 && std::isfinite(noise_variance),
            "GPHyperparams: noise_variance must be >= 0");
  }
};

/// BO dataset of (θ, reward) pairs over the normalized parameter cube.
class ObservationSet {
 public:
  explicit ObservationSet(Eigen::Index dimension) : dimension_(dimension) {
    require(dimension >= 1, "ObservationSet: dimension must be >= 1");
  }

  void add(const Vector& theta, double y) {
    require_dimension(theta, dimension_, "ObservationSet::add");
    require(in_unit_cube(theta), "ObservationSet::add: theta outside [0,1]^d");
    require(std::isfinite(y), "ObservationSet::add: non-finite target");
    thetas_.push_back(theta);
    ys_.push_back(y);
  }

  Eigen::Index dimension() const { return dimension_; }
  std::size_t size() const { return ys_.size(); }
  bool empty() const { return ys_.empty(); }
  const std::vector<Vector>& thetas() const { return thetas_; }
  const std::vector<double>& targets() const { return ys_; }
  const Vector& theta(std::size_t i) const { return thetas_[i]; }
  double target(std::size_t i) const { return ys_[i]; }

 private:
  Eigen::Index dimension_;
  std::vector<Vector> thetas_;
  std::vector<double> ys_;
};

/// Affine map y -> (y - mean) / scale. Scale is the population standard
/// deviation, or 1 when the targets are (numerically) constant.
struct Standardizer {
  double mean = 0.0;
  double scale = 1.0;

  static Standardizer fit(const std::vector<double>& ys) {
    Standardizer s;
    if (ys.empty()) return s;
    double sum = 0.0;
    for (double y : ys) sum += y;
    s.mean = sum / static_cast<double>(ys.size());
    double ss = 0.0;
    for (double y : ys) ss += (y - s.mean) * (y - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(ys.size()));
    s.scale = sd > 1e-12 * std::max(1.0, std::abs(s.mean)) ? sd : 1.0;
    return s;
  }

  Vector apply(const std::vector<double>& ys) const {
    Vector out(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < ys.size(); ++i) out[static_cast<Eigen::Index>(i)] = (ys[i] - mean) / scale;
    return out;
  }
};

inline double rbf_kernel(const Vector& x, const Vector& y, const GPHyperparams& h) {
  require_dimension(y, x.size(), "rbf_kernel");
  return h.signal_variance * std::exp(-(x - y).squaredNorm() / (2.0 * h.lengthscale * h.lengthscale));
}

inline Matrix kernel_matrix(const std::vector<Vector>& xs, const GPHyperparams& h) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = h.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = rbf_kernel(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)], h);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

namespace detail {

// Lower Cholesky factor of `a`, escalating diagonal jitter 1e-10 .. 1e-4.
// Returns the factor and the jitter that was needed (0 if none).
inline std::pair<Matrix, double> cholesky_with_jitter(const Matrix& a) {
  auto attempt = [](const Matrix& m, Matrix& out) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return false;
    out = llt.matrixL();
    return (out.diagonal().array() > 0.0).all() && out.allFinite();
  };
  Matrix l;
  if (attempt(a, l)) return {l, 0.0};
  const Matrix eye = Matrix::Identity(a.rows(), a.cols());
  for (double jitter = 1e-10; jitter <= 1e-4 * (1.0 + 1e-9); jitter *= 10.0) {
    if (attempt(a + jitter * eye, l)) return {l, jitter};
  }
  throw NumericalFailure("cholesky: matrix not positive definite after jitter 1e-4");
}

}  // namespace detail

/// Gaussian process with an RBF kernel conditioned on an ObservationSet.
/// Immutable once fitted.
class GPModel {
 public:
  const GPHyperparams& hyperparams() const { return hyper_; }
  const ObservationSet& data() const { return data_; }
  const Standardizer& standardizer() const { return standardizer_; }
  /// Lower-triangular factor L with L Lᵀ = K + (σ_N² + jitter) I.
  const Matrix& factor() const { return factor_; }
  const Vector& alpha() const { return alpha_; }
  const Vector& standardized_targets() const { return y_std_; }
  double jitter() const { return jitter_; }
  Eigen::Index dimension() const { return data_.dimension(); }

  /// Posterior mean and variance in the standardized output space.
  std::pair<double, double> posterior_standardized(const Vector& x) const {
    require_dimension(x, dimension(), "GPModel::posterior");
    const auto n = static_cast<Eigen::Index>(data_.size());
    Vector kx(n);
    for (Eigen::Index i = 0; i < n; ++i) kx[i] = rbf_kernel(data_.theta(static_cast<std::size_t>(i)), x, hyper_);
    const double mean = kx.dot(alpha_);
    const Vector v = factor_.triangularView<Eigen::Lower>().solve(kx);
    const double var = hyper_.signal_variance - v.squaredNorm();
    return {mean, var > 0.0 ? var : 0.0};
  }

  /// Posterior mean and variance in the original reward units.
  std::pair<double, double> posterior(const Vector& x) const {
    auto [m, v] = posterior_standardized(x);
    const double s = standardizer_.scale;
    return {standardizer_.mean + s * m, s * s * v};
  }

  /// Evidence log p(y | X, h) of the standardized targets.
  double log_marginal_likelihood() const {
    const double n = static_cast<double>(y_std_.size());
    if (!(factor_.diagonal().array() > 0.0).all()) {
      throw NumericalFailure("log_marginal_likelihood: invalid factorization");
    }
    return -0.5 * y_std_.dot(alpha_) - factor_.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * std::numbers::pi);
  }

  friend GPModel fit(const ObservationSet& data, const GPHyperparams& h);

 private:
  explicit GPModel(ObservationSet data) : data_(std::move(data)) {}

  GPHyperparams hyper_;
  ObservationSet data_;
  Standardizer standardizer_;
  Vector y_std_;
  Matrix factor_;
  Vector alpha_;
  double jitter_ = 0.0;
};

/// Conditions the GP on `data`. Deterministic for fixed inputs.
inline GPModel fit(const ObservationSet& data, const GPHyperparams& h) {
  require(!data.empty(), "gp::fit: observation set is empty");
  h.validate();
  GPModel model(data);
  model.hyper_ = h;
  model.standardizer_ = Standardizer::fit(data.targets());
  model.y_std_ = model.standardizer_.apply(data.targets());
  Matrix k = kernel_matrix(data.thetas(), h);
  k.diagonal().array() += h.noise_variance;
  auto [l, jitter] = detail::cholesky_with_jitter(k);
  model.factor_ = std::move(l);
  model.jitter_ = jitter;
  model.alpha_ = model.factor_.transpose().triangularView<Eigen::Upper>().solve(
      model.factor_.triangularView<Eigen::Lower>().solve(model.y_std_));
  return model;
}

inline std::pair<double, double> posterior(const GPModel& model, const Vector& x) {
  return model.posterior(x);
}

inline double log_marginal_likelihood(const GPModel& model) { return model.log_marginal_likelihood(); }

/// Box for evidence maximization, in standardized units.
struct HyperparamBounds {
  double lengthscale_min = 0.1, lengthscale_max = 5.0;
  double signal_min = 0.05, signal_max = 20.0;
  double noise_min = 1e-6, noise_max = 2.0;
};

/// Maximizes the log marginal likelihood over (lengthscale, signal variance,
/// noise variance) in log space with `restarts` log-uniform starts.
/// Returns the best hyperparameters found; `fallback` if every fit failed.
inline GPHyperparams optimize_hyperparams(const ObservationSet& data, const GPHyperparams& fallback,
                                          int restarts, Rng& rng, const HyperparamBounds& b = {}) {
  require(!data.empty(), "optimize_hyperparams: observation set is empty");
  const Vector lo = (Vector(3) << std::log(b.lengthscale_min), std::log(b.signal_min), std::log(b.noise_min)).finished();
  const Vector hi = (Vector(3) << std::log(b.lengthscale_max), std::log(b.signal_max), std::log(b.noise_max)).finished();
  auto decode = [&](const Vector& u) {
    const Vector z = lo + u.cwiseProduct(hi - lo);
    return GPHyperparams{std::exp(z[0]), std::exp(z[1]), std::exp(z[2])};
  };
  auto evidence = [&](const Vector& u) { return fit(data, decode(u)).log_marginal_likelihood(); };

  AscentOptions opt;
  opt.restarts = restarts;
  opt.max_iterations = 60;
  opt.fd_step = 1e-5;
  try {
    return decode(maximize_on_cube(evidence, 3, opt, rng));
  } catch (const OptimizationFailure&) {
    return fallback;
  }
}

}  // namespace uncaps
