#pragma once

// Test-side reference computations. Each one is written independently of the
// library path it checks (explicit inverses, plain loops, Monte Carlo).

#include "uncaps/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace uncaps::testing {

inline Vector random_point(Eigen::Index d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = u(rng);
  return x;
}

inline Matrix random_psd(Eigen::Index d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = n(rng);
  }
  Matrix s = scale * a * a.transpose() / static_cast<double>(d);
  return 0.5 * (s + s.transpose());
}

/// Dense GP posterior with an explicit inverse and its own target scaling
/// (mean-centred, divided by the population standard deviation).
struct DenseGP {
  std::vector<Vector> xs;
  Vector y;  // raw targets
  double lengthscale, signal, noise;

  double kernel(const Vector& a, const Vector& b) const {
    double d2 = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return signal * std::exp(-d2 / (2.0 * lengthscale * lengthscale));
  }
  double y_mean() const { return y.mean(); }
  double y_scale() const {
    const double sd = std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(y.size()));
    return sd > 1e-12 * std::max(1.0, std::abs(y.mean())) ? sd : 1.0;
  }
  Matrix inverse() const {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = kernel(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      k(i, i) += noise;
    }
    return k.fullPivLu().inverse();
  }
  /// (mean, variance) in raw units.
  std::pair<double, double> posterior(const Vector& x) const {
    const auto n = static_cast<Eigen::Index>(xs.size());
    const Matrix kinv = inverse();
    Vector kx(n);
    for (Eigen::Index i = 0; i < n; ++i) kx[i] = kernel(xs[static_cast<std::size_t>(i)], x);
    const Vector ys = (y.array() - y_mean()) / y_scale();
    const double m = kx.dot(kinv * ys);
    const double v = std::max(0.0, signal - kx.dot(kinv * kx));
    return {y_mean() + y_scale() * m, y_scale() * y_scale() * v};
  }
  double log_evidence() const {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = kernel(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      k(i, i) += noise;
    }
    const Vector ys = (y.array() - y_mean()) / y_scale();
    const double pi = 3.14159265358979323846;
    return -0.5 * ys.dot(k.inverse() * ys) - 0.5 * std::log(k.determinant()) - 0.5 * static_cast<double>(n) * std::log(2.0 * pi);
  }
};

/// E[max(Y − best, 0)], Y ~ N(mu, s²), by plain Monte Carlo.
inline double monte_carlo_ei(double mu, double s, double best, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  double sum = 0.0;
  for (int i = 0; i < samples; ++i) sum += std::max(mu + s * n(rng) - best, 0.0);
  return sum / samples;
}

/// Iterates P ← Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA from P = Q until the update
/// is below `tol`, then returns K = (R + BᵀPB)⁻¹BᵀPA.
inline Matrix riccati_gain_by_iteration(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                                        double tol = 1e-12) {
  Matrix p = q;
  for (int it = 0; it < 1000000; ++it) {
    const Matrix s = r + b.transpose() * p * b;
    const Matrix next = q + a.transpose() * p * a - a.transpose() * p * b * s.inverse() * b.transpose() * p * a;
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (change < tol) break;
  }
  return (r + b.transpose() * p * b).inverse() * b.transpose() * p * a;
}

/// Argmax of f over a uniform 1-D grid on [0,1].
inline double grid_argmax_1d(const std::function<double(double)>& f, double step) {
  double best_x = 0.0, best = f(0.0);
  const int n = static_cast<int>(std::round(1.0 / step));
  for (int i = 1; i <= n; ++i) {
    const double x = i * step;
    const double v = f(x);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace uncaps::testing
