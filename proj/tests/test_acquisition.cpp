#include "uncaps/acquisition.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace uncaps;

namespace {

GPModel random_model(Eigen::Index d, int n, std::mt19937_64& rng, double lengthscale = 0.2) {
  ObservationSet data(d);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n; ++i) data.add(uncaps::testing::random_point(d, rng), noise(rng));
  return fit(data, GPHyperparams{lengthscale, 1.0, 1e-4});
}

}  // namespace

TEST(ExpectedImprovement, AtThresholdWithUnitSpread) {
  EXPECT_NEAR(expected_improvement(1.5, 1.0, 1.5), 0.398942280401, 1e-12);
}

TEST(ExpectedImprovement, DegenerateSpread) {
  EXPECT_DOUBLE_EQ(expected_improvement(2.5, 0.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(expected_improvement(1.5, 0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(expected_improvement(2.5, 1e-13, 2.0), 0.5);
}

TEST(ExpectedImprovement, MonteCarloCase) {
  const double mc = uncaps::testing::monte_carlo_ei(-0.2, 0.3, 0.0, 1000000, 42);
  EXPECT_NEAR(expected_improvement(-0.2, 0.3, 0.0), mc, 0.01 * mc);
}

TEST(ExpectedImprovement, NonNegativeAndVanishesWithSpread) {
  for (double mu = -3.0; mu <= 3.0; mu += 0.25) {
    for (double s = 0.0; s <= 3.0; s += 0.25) EXPECT_GE(expected_improvement(mu, s, 0.0), 0.0);
  }
  EXPECT_LT(expected_improvement(-0.5, 1e-3, 0.0), 1e-12);
  EXPECT_LT(expected_improvement(0.0, 1e-6, 0.0), 1e-6);
}

TEST(ExpectedImprovement, NondecreasingInSpreadAboveThreshold) {
  for (double mu = 0.05; mu <= 2.0; mu += 0.15) {
    double prev = expected_improvement(mu, 0.0, 0.0);
    for (double s = 0.01; s <= 3.0; s += 0.01) {
      const double v = expected_improvement(mu, s, 0.0);
      EXPECT_GE(v, prev - 1e-15) << "mu=" << mu << " s=" << s;
      prev = v;
    }
  }
}

TEST(AcquisitionContext, BestIsMaxStandardizedTarget) {
  ObservationSet data(1);
  data.add(Vector::Constant(1, 0.1), 1.0);
  data.add(Vector::Constant(1, 0.5), 5.0);
  data.add(Vector::Constant(1, 0.9), 3.0);
  const GPModel m = fit(data, GPHyperparams{});
  const AcquisitionContext ctx = make_acquisition_context(m, 0.01);
  // Targets 1, 5, 3: mean 3, population sd sqrt(8/3).
  EXPECT_NEAR(ctx.y_best, 2.0 / std::sqrt(8.0 / 3.0), 1e-12);
  EXPECT_THROW(make_acquisition_context(m, -1.0), std::invalid_argument);
}

TEST(UnscentedEI, EqualsEIAtZeroNoise) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index d = 1 + rep % 4;
    const GPModel m = random_model(d, 3 + rep % 10, rng);
    const AcquisitionContext ctx = make_acquisition_context(m, 0.0);
    const Vector x = uncaps::testing::random_point(d, rng);
    EXPECT_EQ(unscented_ei(ctx, x), expected_improvement(ctx, x));
  }
}

TEST(UnscentedEI, ThreeTermSumOnFourPointFixture) {
  ObservationSet data(1);
  data.add(Vector::Constant(1, 0.1), 0.2);
  data.add(Vector::Constant(1, 0.35), 1.0);
  data.add(Vector::Constant(1, 0.6), 0.4);
  data.add(Vector::Constant(1, 0.9), -0.3);
  const GPModel m = fit(data, GPHyperparams{0.2, 1.0, 1e-4});
  const AcquisitionContext ctx = make_acquisition_context(m, 0.01, 2.0);
  const double x = 0.5, h = std::sqrt(0.03);
  auto ei = [&](double p) { return expected_improvement(ctx, Vector::Constant(1, p)); };
  const double oracle = (2.0 / 3.0) * ei(x) + (1.0 / 6.0) * ei(x + h) + (1.0 / 6.0) * ei(x - h);
  EXPECT_NEAR(unscented_ei(ctx, Vector::Constant(1, x)), oracle, 1e-10);
}

TEST(UnscentedEI, ClampsSigmaPointsAtBoundary) {
  std::mt19937_64 rng(2);
  const GPModel m = random_model(1, 6, rng);
  const AcquisitionContext ctx = make_acquisition_context(m, 0.01, 2.0);
  const double h = std::sqrt(0.03);
  auto ei = [&](double p) { return expected_improvement(ctx, Vector::Constant(1, p)); };
  const double oracle = (2.0 / 3.0) * ei(0.05) + (1.0 / 6.0) * ei(0.05 + h) + (1.0 / 6.0) * ei(0.0);
  EXPECT_NEAR(unscented_ei(ctx, Vector::Constant(1, 0.05)), oracle, 1e-12);
}

TEST(UnscentedEI, LocallyAffineSurfaceGivesEI) {
  // Far from the data the posterior is flat, so EI is locally constant.
  ObservationSet data(2);
  data.add(Vector::Constant(2, 0.0), 1.0);
  data.add((Vector(2) << 0.02, 0.0).finished(), 0.0);
  const GPModel m = fit(data, GPHyperparams{0.05, 1.0, 1e-4});
  const AcquisitionContext ctx = make_acquisition_context(m, 1e-4);
  const Vector x = Vector::Constant(2, 0.8);
  EXPECT_NEAR(unscented_ei(ctx, x), expected_improvement(ctx, x), 1e-10);
}

TEST(UnscentedEI, BetweenMinAndMaxOverSigmaPoints) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const GPModel m = random_model(2, 8, rng);
    const AcquisitionContext ctx = make_acquisition_context(m, 0.02);
    const Vector x = uncaps::testing::random_point(2, rng);
    SigmaPointSet sp = sigma_points_isotropic(x, 0.02, 2.0);
    sp.clamp_to_cube();
    double lo = 1e300, hi = -1e300;
    for (const Vector& p : sp.points) {
      lo = std::min(lo, expected_improvement(ctx, p));
      hi = std::max(hi, expected_improvement(ctx, p));
    }
    const double u = unscented_ei(ctx, x);
    EXPECT_GE(u, lo - 1e-15);
    EXPECT_LE(u, hi + 1e-15);
  }
}

TEST(MaximizeAcquisition, SmoothUniqueOptimum) {
  Rng rng(4);
  const Vector x = maximize_acquisition([](const Vector& v) { return -(v.array() - 0.7).square().sum(); }, 3, 20, rng);
  EXPECT_LE((x.array() - 0.7).abs().maxCoeff(), 1e-3);
}

TEST(MaximizeAcquisition, ConstantObjective) {
  Rng rng(5);
  const Vector x = maximize_acquisition([](const Vector&) { return 1.0; }, 2, 10, rng);
  EXPECT_TRUE(in_unit_cube(x));
}

TEST(MaximizeAcquisition, TwoBumpsFindGlobalMax) {
  auto bumps = [](double x) {
    return 0.5 * std::exp(-(x - 0.3) * (x - 0.3) / (2 * 0.05 * 0.05)) +
           1.0 * std::exp(-(x - 0.9) * (x - 0.9) / (2 * 0.05 * 0.05));
  };
  const double grid = uncaps::testing::grid_argmax_1d(bumps, 1e-4);
  Rng rng(6);
  const Vector x = maximize_acquisition([&](const Vector& v) { return bumps(v[0]); }, 1, 50, rng);
  EXPECT_NEAR(x[0], grid, 1e-2);
  EXPECT_NEAR(x[0], 0.9, 1e-2);
}

TEST(MaximizeAcquisition, FailsWhenEveryStartFails) {
  Rng rng(7);
  EXPECT_THROW(maximize_acquisition([](const Vector&) -> double { throw std::runtime_error("x"); }, 2, 5, rng),
               OptimizationFailure);
  Rng rng2(7);
  EXPECT_THROW(maximize_acquisition([](const Vector&) { return std::nan(""); }, 2, 5, rng2), OptimizationFailure);
}

TEST(MaximizeAcquisition, DeterministicAndNoWorseThanStarts) {
  std::mt19937_64 gen(8);
  const GPModel m = random_model(2, 10, gen);
  const AcquisitionContext ctx = make_acquisition_context(m, 0.01);
  auto acq = [&](const Vector& x) { return unscented_ei(ctx, x); };
  Rng a(9), b(9), starts(9);
  const Vector xa = maximize_acquisition(acq, 2, 15, a);
  const Vector xb = maximize_acquisition(acq, 2, 15, b);
  EXPECT_EQ(xa, xb);
  const double best = acq(xa);
  for (int i = 0; i < 15; ++i) EXPECT_GE(best, acq(uniform_in_cube(2, starts)));
}
