#pragma once

#include "uncaps/core.hpp"

#include <cmath>
#include <functional>
#include <type_traits>
#include <vector>

namespace uncaps {

struct UTConfig {
  double k = 2.0;
  Eigen::Index d = 1;

  void validate() const {
    require(d >= 1, "UTConfig: dimension must be >= 1");
    require(static_cast<double>(d) + k > 0.0, "UTConfig: d + k must be > 0");
  }
};

/// 2d+1 sigma points ordered (x⁰, x₊⁽¹⁾..x₊⁽ᵈ⁾, x₋⁽¹⁾..x₋⁽ᵈ⁾) with their
/// unscented weights in the same order.
struct SigmaPointSet {
  std::vector<Vector> points;
  std::vector<double> weights;

  Eigen::Index dimension() const { return points.empty() ? 0 : points.front().size(); }
  const Vector& center() const { return points[0]; }
  const Vector& plus(Eigen::Index i) const { return points[static_cast<std::size_t>(1 + i)]; }
  const Vector& minus(Eigen::Index i) const {
    return points[static_cast<std::size_t>(1 + dimension() + i)];
  }
  double weight_plus(Eigen::Index i) const { return weights[static_cast<std::size_t>(1 + i)]; }
  double weight_minus(Eigen::Index i) const {
    return weights[static_cast<std::size_t>(1 + dimension() + i)];
  }

  /// Clamps every point to [0,1]^d in place. Weights are unchanged.
  SigmaPointSet& clamp_to_cube() {
    for (Vector& p : points) p = uncaps::clamp_to_cube(p);
    return *this;
  }
};

namespace detail {

// Builds the set from the rows of a precomputed square root of (d+k)Σ.
inline SigmaPointSet sigma_points_from_root(const Vector& mean, const Matrix& root, double k) {
  const Eigen::Index d = mean.size();
  const double dk = static_cast<double>(d) + k;
  SigmaPointSet sp;
  sp.points.reserve(static_cast<std::size_t>(2 * d + 1));
  sp.weights.reserve(static_cast<std::size_t>(2 * d + 1));
  sp.points.push_back(mean);
  sp.weights.push_back(k / dk);
  for (Eigen::Index i = 0; i < d; ++i) {
    sp.points.push_back(mean + root.row(i).transpose());
    sp.weights.push_back(1.0 / (2.0 * dk));
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    sp.points.push_back(mean - root.row(i).transpose());
    sp.weights.push_back(1.0 / (2.0 * dk));
  }
  return sp;
}

}  // namespace detail

/// Sigma points of N(mean, covariance) with scale coefficient k.
///
/// The square root of (d+k)·covariance is the symmetric (spectral) root, so
/// the result does not depend on the basis. Diagonal covariances take the
/// exact elementwise root.
inline SigmaPointSet sigma_points(const Vector& mean, const Matrix& covariance, double k) {
  const Eigen::Index d = mean.size();
  require(d >= 1, "sigma_points: empty mean");
  require(covariance.rows() == d && covariance.cols() == d, "sigma_points: covariance shape mismatch");
  require(static_cast<double>(d) + k > 0.0, "sigma_points: d + k must be > 0");
  require(covariance.allFinite(), "sigma_points: non-finite covariance");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          "sigma_points: covariance is not symmetric");

  const double dk = static_cast<double>(d) + k;
  Matrix root;
  const bool diagonal = (covariance - Matrix(covariance.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  if (diagonal) {
    require((covariance.diagonal().array() >= 0.0).all(), "sigma_points: covariance is not PSD");
    root = (dk * covariance.diagonal()).cwiseSqrt().asDiagonal();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(dk * covariance);
    const Vector& lambda = es.eigenvalues();
    require(lambda.minCoeff() >= -1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff()),
            "sigma_points: covariance is not PSD");
    root = es.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  }
  return detail::sigma_points_from_root(mean, root, k);
}

/// Sigma points of N(mean, I·variance): off-centre points sit at
/// ±sqrt((d+k)·variance) along each axis.
inline SigmaPointSet sigma_points_isotropic(const Vector& mean, double variance, double k) {
  const Eigen::Index d = mean.size();
  require(d >= 1, "sigma_points: empty mean");
  require(variance >= 0.0 && std::isfinite(variance), "sigma_points: variance must be >= 0");
  require(static_cast<double>(d) + k > 0.0, "sigma_points: d + k must be > 0");
  const double spread = std::sqrt((static_cast<double>(d) + k) * variance);
  return detail::sigma_points_from_root(mean, spread * Matrix::Identity(d, d), k);
}

/// Weighted sigma-point sum ω⁰f(x⁰) + Σᵢ ω₊⁽ⁱ⁾f(x₊⁽ⁱ⁾) + ω₋⁽ⁱ⁾f(x₋⁽ⁱ⁾).
/// `f` may return a scalar or an Eigen vector; exceptions from `f` propagate.
template <class F>
auto unscented_mean(F&& f, const SigmaPointSet& sp) {
  using Result = std::decay_t<std::invoke_result_t<F&, const Vector&>>;
  const Eigen::Index d = sp.dimension();
  Result acc = sp.weights[0] * f(sp.center());
  for (Eigen::Index i = 0; i < d; ++i) {
    acc += sp.weight_plus(i) * f(sp.plus(i));
    acc += sp.weight_minus(i) * f(sp.minus(i));
  }
  return acc;
}

}  // namespace uncaps
