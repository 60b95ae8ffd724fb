#pragma once

#include "uncaps/core.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace uncaps {

/// Options for multi-restart projected gradient ascent over [0,1]^d.
struct AscentOptions {
  int restarts = 50;
  /// When larger than `restarts`, this many uniform points are screened and
  /// the best `restarts` of them seed the local ascents.
  int candidate_pool = 0;
  int max_iterations = 100;
  double step_tolerance = 1e-9;
  /// Central-difference step for objectives without an analytic gradient.
  double fd_step = 1e-6;
};

namespace detail {

inline bool lexicographically_less(const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

// Projected gradient ascent with Armijo backtracking and Barzilai-Borwein
// step sizes. `fg(x, grad)` returns f(x) and writes the gradient; trial
// points of the line search only call `f`.
template <class Value, class ValueGrad>
std::pair<Vector, double> local_ascent(Value& f, ValueGrad& fg, Vector x, const AscentOptions& opt) {
  const Eigen::Index d = x.size();
  Vector g(d);
  double fx = fg(x, g);
  if (!std::isfinite(fx)) return {x, fx};

  double gmax = g.cwiseAbs().maxCoeff();
  double step = gmax > 0.0 ? 0.1 / gmax : 1.0;
  Vector gn(d);
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector dir = g;
    for (Eigen::Index i = 0; i < d; ++i) {
      if ((x[i] <= 0.0 && dir[i] < 0.0) || (x[i] >= 1.0 && dir[i] > 0.0)) dir[i] = 0.0;
    }
    if (!(dir.norm() > 1e-14)) break;

    bool accepted = false;
    Vector xn;
    double fn = fx;
    while (step > 1e-14) {
      xn = clamp_to_cube(x + step * dir);
      fn = f(xn);
      if (std::isfinite(fn) && fn > fx + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    fg(xn, gn);

    const Vector s = xn - x;
    const Vector y = gn - g;
    const double curvature = -s.dot(y);
    x = xn;
    fx = fn;
    g = gn;
    if (s.norm() < opt.step_tolerance) break;
    step = curvature > 0.0 ? std::clamp(s.squaredNorm() / curvature, 1e-10, 1e3) : 2.0 * step;
  }
  return {x, fx};
}

// Projected Newton ascent. `fgh(x, grad, hess)` returns f(x) and writes the
// gradient and Hessian; `f` scores backtracking points. Variables held at a
// bound by the gradient are fixed for the step; the rest take a Newton step
// with Armijo backtracking.
template <class Value, class ValueGradHess>
std::pair<Vector, double> local_newton_ascent(Value& f, ValueGradHess& fgh, Vector x, const AscentOptions& opt) {
  const Eigen::Index d = x.size();
  Vector g(d), gn(d);
  Matrix h(d, d), hn(d, d);
  double fx = fgh(x, g, h);
  if (!std::isfinite(fx)) return {x, fx};
  std::vector<Eigen::Index> free;
  for (int it = 0; it < opt.max_iterations; ++it) {
    free.clear();
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!((x[i] <= 0.0 && g[i] < 0.0) || (x[i] >= 1.0 && g[i] > 0.0))) free.push_back(i);
    }
    if (free.empty()) break;
    const auto nf = static_cast<Eigen::Index>(free.size());
    Vector gf(nf);
    Matrix hf(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf[a] = g[free[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < nf; ++b) hf(a, b) = h(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    }
    if (!(gf.norm() > 1e-14)) break;
    // Newton step on −H with eigenvalues replaced by their magnitudes, so the
    // step ascends even where f is not locally concave.
    const Eigen::SelfAdjointEigenSolver<Matrix> es(-hf);
    const Vector& lambda = es.eigenvalues();
    const double floor = std::max(1e-8 * lambda.cwiseAbs().maxCoeff(), 1e-12);
    const Vector inv = lambda.cwiseAbs().cwiseMax(floor).cwiseInverse();
    const Vector step_f = es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * gf);
    Vector dir = Vector::Zero(d);
    for (Eigen::Index a = 0; a < nf; ++a) dir[free[static_cast<std::size_t>(a)]] = step_f[a];
    if (dir.norm() < opt.step_tolerance) break;
    // Weak curvature gives very long steps; cap them at a quarter of the cube.
    const double longest = dir.cwiseAbs().maxCoeff();
    if (longest > 0.25) dir *= 0.25 / longest;

    bool accepted = false;
    bool have_derivatives = false;
    Vector xn;
    double fn = fx;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      xn = clamp_to_cube(x + t * dir);
      have_derivatives = t == 1.0;
      fn = have_derivatives ? fgh(xn, gn, hn) : f(xn);
      if (std::isfinite(fn) && fn > fx + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (!have_derivatives) fn = fgh(xn, gn, hn);
    const double moved = (xn - x).norm();
    x = xn;
    fx = fn;
    g.swap(gn);
    h.swap(hn);
    if (moved < opt.step_tolerance) break;
  }
  return {x, fx};
}

// Runs the restarts and reduces by max, breaking ties lexicographically.
// `local(start)` returns the (point, value) reached from one start.
template <class Value, class Local>
Vector multi_start_with(Value& f, Local&& local, Eigen::Index d, const AscentOptions& opt, Rng& rng) {
  require(opt.restarts >= 1, "maximize: restarts must be >= 1");
  require(d >= 1, "maximize: dimension must be >= 1");

  std::vector<Vector> starts;
  if (opt.candidate_pool > opt.restarts) {
    std::vector<std::pair<double, Vector>> pool;
    pool.reserve(static_cast<std::size_t>(opt.candidate_pool));
    for (int i = 0; i < opt.candidate_pool; ++i) {
      Vector x = uniform_in_cube(d, rng);
      double v = -std::numeric_limits<double>::infinity();
      try {
        v = f(x);
      } catch (const std::exception&) {
      }
      if (!std::isfinite(v)) v = -std::numeric_limits<double>::infinity();
      pool.emplace_back(v, std::move(x));
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < opt.restarts; ++i) starts.push_back(pool[static_cast<std::size_t>(i)].second);
  } else {
    for (int i = 0; i < opt.restarts; ++i) starts.push_back(uniform_in_cube(d, rng));
  }

  std::optional<Vector> best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const Vector& start : starts) {
    std::pair<Vector, double> result;
    try {
      result = local(start);
    } catch (const std::exception&) {
      continue;
    }
    if (!std::isfinite(result.second)) continue;
    if (!best || result.second > best_value ||
        (result.second == best_value && lexicographically_less(result.first, *best))) {
      best = result.first;
      best_value = result.second;
    }
  }
  if (!best) throw OptimizationFailure("maximize: objective evaluation failed at every start point");
  return *best;
}

template <class Value, class ValueGrad>
Vector multi_start(Value& f, ValueGrad& fg, Eigen::Index d, const AscentOptions& opt, Rng& rng) {
  return multi_start_with(f, [&](const Vector& start) { return local_ascent(f, fg, start, opt); }, d, opt, rng);
}

}  // namespace detail

/// Maximizes a scalar function over [0,1]^d with multi-restart local ascent.
/// Gradients are taken by central differences clipped to the cube.
/// The result is deterministic given the generator state, and its value is at
/// least the value at every start point.
template <class F>
Vector maximize_on_cube(F&& f, Eigen::Index d, const AscentOptions& opt, Rng& rng) {
  auto fg = [&](const Vector& x, Vector& grad) {
    const double fx = f(x);
    grad.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Vector hi = x, lo = x;
      hi[i] = std::min(1.0, x[i] + opt.fd_step);
      lo[i] = std::max(0.0, x[i] - opt.fd_step);
      grad[i] = (f(hi) - f(lo)) / (hi[i] - lo[i]);
    }
    return fx;
  };
  return detail::multi_start(f, fg, d, opt, rng);
}

/// Same contract as maximize_on_cube, for objectives that supply their own
/// gradient: `fg(x, grad)` returns f(x) and writes ∇f(x) into grad.
template <class FG>
Vector maximize_on_cube_with_gradient(FG&& fg, Eigen::Index d, const AscentOptions& opt, Rng& rng) {
  Vector scratch;
  auto f = [&](const Vector& x) { return fg(x, scratch); };
  return detail::multi_start(f, fg, d, opt, rng);
}

/// As above, with a cheaper value-only callback `f` used for screening.
template <class F, class FG>
Vector maximize_on_cube_with_gradient(F&& f, FG&& fg, Eigen::Index d, const AscentOptions& opt, Rng& rng) {
  return detail::multi_start(f, fg, d, opt, rng);
}

/// Same contract again, with second derivatives: `fgh(x, grad, hess)`
/// returns f(x) and writes ∇f(x) and ∇²f(x); local ascents take projected
/// Newton steps.
template <class F, class FGH>
Vector maximize_on_cube_with_hessian(F&& f, FGH&& fgh, Eigen::Index d, const AscentOptions& opt, Rng& rng) {
  return detail::multi_start_with(
      f, [&](const Vector& start) { return detail::local_newton_ascent(f, fgh, start, opt); }, d, opt, rng);
}

}  // namespace uncaps
