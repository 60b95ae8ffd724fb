#include "uncaps/search.hpp"

#include <gtest/gtest.h>

using namespace uncaps;

namespace {

struct Fixture {
  PlantSpec plant = make_mass_spring_damper({.latent = {"mass", "spring"}});
  LQRPolicyProvider provider{plant};
  RealWorldSpec world{plant, (Vector(2) << 0.3, 0.7).finished(), 0.05};
};

SearchConfig small_config(Variant v, std::uint64_t seed = 7) {
  SearchConfig cfg;
  cfg.variant = v;
  cfg.seed = seed;
  cfg.iterations = 4;
  cfg.n_init = 2;
  cfg.noise_variance = 0.01;
  cfg.n_samples = 4;
  cfg.n_features = 100;
  cfg.acq_restarts = 5;
  cfg.latent_restarts = 3;
  cfg.latent_pool = 20;
  cfg.horizon = 40;
  cfg.initial_state = (Vector(2) << 1.0, 0.0).finished();
  return cfg;
}

void expect_same_records(const SearchTrace& a, const SearchTrace& b) {
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].theta, b.records[i].theta) << "record " << i;
    EXPECT_EQ(a.records[i].y, b.records[i].y) << "record " << i;
  }
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (Variant v : {Variant::StandardBO, Variant::UncAPSMinusEP, Variant::UncAPSPlusGA, Variant::UncAPS}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("BO"), std::invalid_argument);
}

TEST(PolicySearch, SingleIterationHasTwoRecords) {
  Fixture f;
  SearchConfig cfg = small_config(Variant::StandardBO);
  cfg.iterations = 1;
  cfg.n_init = 1;
  const SearchTrace trace = policy_search(cfg, f.provider, f.world);
  ASSERT_EQ(trace.records.size(), 2u);
  EXPECT_EQ(trace.real_evaluations, 2);
  EXPECT_EQ(trace.records[0].iteration, 0);
  EXPECT_EQ(trace.records[1].iteration, 1);
}

TEST(PolicySearch, BudgetAndRunningBest) {
  Fixture f;
  for (Variant v : {Variant::StandardBO, Variant::UncAPS}) {
    const SearchConfig cfg = small_config(v);
    const SearchTrace trace = policy_search(cfg, f.provider, f.world);
    ASSERT_EQ(trace.records.size(), static_cast<std::size_t>(cfg.n_init + cfg.iterations));
    EXPECT_EQ(trace.real_evaluations, cfg.n_init + cfg.iterations);
    double running = -std::numeric_limits<double>::infinity();
    for (const IterationRecord& r : trace.records) {
      EXPECT_TRUE(in_unit_cube(r.theta));
      running = std::max(running, r.y);
      EXPECT_EQ(r.best_y, running);
    }
    EXPECT_EQ(trace.best_y(), running);
  }
}

TEST(PolicySearch, DeterministicGivenSeed) {
  Fixture f;
  const SearchTrace a = policy_search(small_config(Variant::UncAPS, 11), f.provider, f.world);
  const SearchTrace b = policy_search(small_config(Variant::UncAPS, 11), f.provider, f.world);
  expect_same_records(a, b);
  ASSERT_TRUE(a.optimal && b.optimal);
  ASSERT_EQ(a.optimal->size(), 4u);
  for (std::size_t i = 0; i < a.optimal->size(); ++i) EXPECT_EQ(a.optimal->samples[i], b.optimal->samples[i]);

  const SearchTrace c = policy_search(small_config(Variant::UncAPS, 12), f.provider, f.world);
  EXPECT_NE(a.records.front().theta, c.records.front().theta);
}

TEST(PolicySearch, ZeroNoiseUnscentedMatchesStandard) {
  Fixture f;
  SearchConfig bo = small_config(Variant::StandardBO);
  SearchConfig ep = small_config(Variant::UncAPSMinusEP);
  bo.noise_variance = ep.noise_variance = 0.0;
  expect_same_records(policy_search(bo, f.provider, f.world), policy_search(ep, f.provider, f.world));
}

TEST(PolicySearch, ZeroNoiseSingleSampleVariantsCoincide) {
  Fixture f;
  std::vector<SearchTrace> traces;
  for (Variant v : {Variant::StandardBO, Variant::UncAPSMinusEP, Variant::UncAPSPlusGA, Variant::UncAPS}) {
    SearchConfig cfg = small_config(v);
    cfg.noise_variance = 0.0;
    cfg.n_samples = 1;
    traces.push_back(policy_search(cfg, f.provider, f.world));
  }
  for (std::size_t i = 1; i < traces.size(); ++i) expect_same_records(traces[0], traces[i]);
  EXPECT_EQ(traces[2].optimal->samples, traces[3].optimal->samples);
}

TEST(PolicySearch, OnlyLatentVariantsSampleOptimalSet) {
  Fixture f;
  EXPECT_FALSE(policy_search(small_config(Variant::StandardBO), f.provider, f.world).optimal);
  EXPECT_FALSE(policy_search(small_config(Variant::UncAPSMinusEP), f.provider, f.world).optimal);
  const SearchTrace t = policy_search(small_config(Variant::UncAPSPlusGA), f.provider, f.world);
  ASSERT_TRUE(t.optimal);
  for (const Vector& s : t.optimal->samples) EXPECT_TRUE(in_unit_cube(s));
}

TEST(PolicySearch, EvidenceModeRuns) {
  Fixture f;
  SearchConfig cfg = small_config(Variant::UncAPSMinusEP);
  cfg.hyper_mode = HyperparamMode::Evidence;
  cfg.hyper_restarts = 3;
  const SearchTrace t = policy_search(cfg, f.provider, f.world);
  EXPECT_EQ(t.records.size(), 6u);
  EXPECT_GE(t.final_hyperparams.lengthscale, cfg.hyper_bounds.lengthscale_min * (1 - 1e-9));
  EXPECT_LE(t.final_hyperparams.lengthscale, cfg.hyper_bounds.lengthscale_max * (1 + 1e-9));
}

TEST(PolicySearch, RejectsBadConfig) {
  Fixture f;
  SearchConfig cfg = small_config(Variant::StandardBO);
  cfg.iterations = 0;
  EXPECT_THROW(policy_search(cfg, f.provider, f.world), std::invalid_argument);
  cfg = small_config(Variant::StandardBO);
  cfg.initial_state = Vector::Zero(3);
  EXPECT_THROW(policy_search(cfg, f.provider, f.world), std::invalid_argument);
}

TEST(FinalPolicy, DispatchesPerVariant) {
  Fixture f;
  const Vector o = (Vector(2) << 0.6, -0.1).finished();
  for (Variant v : {Variant::StandardBO, Variant::UncAPSMinusEP, Variant::UncAPSPlusGA, Variant::UncAPS}) {
    const SearchConfig cfg = small_config(v);
    const SearchTrace trace = policy_search(cfg, f.provider, f.world);
    const Vector got = final_policy(trace, f.provider, cfg)(o);
    Vector expected;
    switch (v) {
      case Variant::StandardBO: expected = f.provider.action(trace.best_theta(), o); break;
      case Variant::UncAPSMinusEP:
        expected = uas_action(f.provider, trace.best_theta(), cfg.noise_variance, cfg.ut_k, o);
        break;
      case Variant::UncAPSPlusGA: expected = ga_action(f.provider, *trace.optimal, cfg.ut_k, o); break;
      case Variant::UncAPS: expected = averaged_policy_action(f.provider, *trace.optimal, o); break;
    }
    EXPECT_EQ(got, expected) << to_string(v);
  }
}

TEST(FinalPolicy, GaussianFitCrossCheck) {
  // The GA policy is UAS at the sample mean with the mean componentwise variance.
  Fixture f;
  const SearchConfig cfg = small_config(Variant::UncAPSPlusGA);
  const SearchTrace trace = policy_search(cfg, f.provider, f.world);
  const auto& s = trace.optimal->samples;
  Vector mean = Vector::Zero(2);
  for (const Vector& x : s) mean += x;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (const Vector& x : s) var += (x - mean).squaredNorm();
  var /= 2.0 * static_cast<double>(s.size() - 1);
  const Vector o = (Vector(2) << -0.4, 0.3).finished();
  EXPECT_NEAR(final_policy(trace, f.provider, cfg)(o)[0], uas_action(f.provider, mean, var, cfg.ut_k, o)[0], 1e-10);
}

TEST(FinalPolicy, RejectsMismatchedTrace) {
  Fixture f;
  const SearchConfig bo = small_config(Variant::StandardBO);
  const SearchTrace trace = policy_search(bo, f.provider, f.world);
  EXPECT_THROW(final_policy(trace, f.provider, small_config(Variant::UncAPS)), std::invalid_argument);
  SearchTrace fake = trace;
  fake.variant = Variant::UncAPS;
  EXPECT_THROW(final_policy(fake, f.provider, small_config(Variant::UncAPS)), std::invalid_argument);
}
