#include "uncaps/baselines.hpp"

#include <gtest/gtest.h>

using namespace uncaps;

namespace {

PlantSpec hetero_plant() { return make_mass_spring_damper({.latent = {"mass", "spring", "sensor_offset"}}); }

Vector obs(double p, double v) { return (Vector(2) << p, v).finished(); }

}  // namespace

TEST(DomainRandomisation, DegenerateBoxIsMatchedPolicy) {
  const LQRPolicyProvider provider(hetero_plant());
  const Vector theta0 = (Vector(3) << 0.2, 0.8, 0.9).finished();
  DRConfig cfg;
  cfg.samples = 7;
  cfg.lower = cfg.upper = theta0;
  const DRController ctl = dr_controller(cfg, provider);
  EXPECT_LE((ctl.gain - provider.gain(theta0)).cwiseAbs().maxCoeff(), 1e-12);
  for (double p : {-1.0, 0.0, 0.7}) {
    EXPECT_NEAR(ctl.action(obs(p, 0.3))[0], provider.action(theta0, obs(p, 0.3))[0], 1e-12);
  }
}

TEST(DomainRandomisation, TwoSampleAverage) {
  const LQRPolicyProvider provider(hetero_plant());
  DRConfig cfg;
  cfg.samples = 2;
  cfg.seed = 99;
  Rng replay(99);
  const Vector t1 = uniform_in_cube(3, replay);
  const Vector t2 = uniform_in_cube(3, replay);
  const ActionRule rule = dr_policy(cfg, provider);
  const Vector o = obs(0.4, -0.6);
  const double oracle = 0.5 * (provider.action(t1, o)[0] + provider.action(t2, o)[0]);
  EXPECT_NEAR(rule(o)[0], oracle, 1e-12);
}

TEST(DomainRandomisation, GainIsMeanOfSampledGains) {
  const LQRPolicyProvider provider(hetero_plant());
  DRConfig cfg;
  cfg.samples = 30;
  cfg.seed = 5;
  cfg.lower = Vector::Constant(3, 0.25);
  cfg.upper = Vector::Constant(3, 0.5);
  const DRController ctl = dr_controller(cfg, provider);
  ASSERT_EQ(ctl.thetas.size(), 30u);
  Matrix sum = Matrix::Zero(1, 2);
  for (const Vector& t : ctl.thetas) {
    EXPECT_TRUE((t.array() >= 0.25).all() && (t.array() <= 0.5).all());
    sum += provider.gain(t);
  }
  EXPECT_LE((ctl.gain - sum / 30.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DomainRandomisation, DeterministicInSeed) {
  const LQRPolicyProvider provider(hetero_plant());
  DRConfig cfg;
  cfg.samples = 10;
  cfg.seed = 3;
  const DRController a = dr_controller(cfg, provider);
  const DRController b = dr_controller(cfg, provider);
  EXPECT_EQ(a.gain, b.gain);
  EXPECT_EQ(a.bias, b.bias);
  cfg.seed = 4;
  EXPECT_NE(dr_controller(cfg, provider).gain, a.gain);
}

TEST(DomainRandomisation, RejectsBadBounds) {
  const LQRPolicyProvider provider(hetero_plant());
  DRConfig cfg;
  cfg.lower = Vector::Constant(3, 0.6);
  cfg.upper = Vector::Constant(3, 0.4);
  EXPECT_THROW(dr_controller(cfg, provider), std::invalid_argument);
  cfg.lower = Vector::Zero(2);
  cfg.upper = Vector::Ones(2);
  EXPECT_THROW(dr_controller(cfg, provider), std::invalid_argument);
  cfg = DRConfig{};
  cfg.samples = 0;
  EXPECT_THROW(dr_controller(cfg, provider), std::invalid_argument);
}

TEST(DomainRandomisation, MatchedPolicyDoesAtLeastAsWell) {
  const PlantSpec plant = hetero_plant();
  const LQRPolicyProvider provider(plant);
  const Vector theta_r = (Vector(3) << 0.9, 0.1, 0.95).finished();
  const RealWorldSpec world(plant, theta_r, 0.0);
  DRConfig cfg;
  cfg.samples = 64;
  cfg.seed = 1;
  const ActionRule dr = dr_policy(cfg, provider);
  const ActionRule matched = [&](const Vector& o) { return provider.action(theta_r, o); };
  Rng a(8), b(8);
  const JumpstartResult jm = jumpstart_eval(world, matched, 30, 300, Vector::Ones(2), a);
  const JumpstartResult jd = jumpstart_eval(world, dr, 30, 300, Vector::Ones(2), b);
  EXPECT_GE(jm.mean, jd.mean);
  for (std::size_t e = 0; e < jm.episode_rewards.size(); ++e) {
    EXPECT_GE(jm.episode_rewards[e], jd.episode_rewards[e] - 1e-9) << "episode " << e;
  }
}
