#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>

#include "helpers.hpp"
#include "oracle.hpp"
#include "p2o/error.hpp"
#include "p2o/policy.hpp"

using namespace p2o;
namespace th = testing_helpers;

TEST(Policy, ZeroParamsSampleUniformly) {
  const int V = 8, L = 4, d = 16;
  const PolicyParams p(V, L, d);
  Rng rng(3);
  const Vector f(d, 0.7);
  const int n = 10000;
  std::vector<std::vector<int>> counts(L, std::vector<int>(V, 0));
  for (int i = 0; i < n; ++i) {
    const Trajectory y = sample_trajectory(p, f, 0.6, rng);
    for (int l = 0; l < L; ++l) ++counts[l][y.tokens[l]];
  }
  const double q = 1.0 / V;
  const double sigma = std::sqrt(n * q * (1 - q));
  for (int l = 0; l < L; ++l)
    for (int v = 0; v < V; ++v) EXPECT_LE(std::abs(counts[l][v] - n * q), 3 * sigma) << l << "," << v;
}

TEST(Policy, GreedyModeIsDeterministicArgmax) {
  const PolicyParams p = th::random_policy(5, 3, 6, 1);
  Rng r1(1), r2(99);
  Rng vr(5);
  const Vector f = th::random_vector(6, vr);
  const Trajectory a = sample_trajectory(p, f, 0.0, r1);
  const Trajectory b = sample_trajectory(p, f, 0.0, r2);
  EXPECT_EQ(a.tokens, b.tokens);
  for (int l = 0; l < 3; ++l) {
    const Vector z = position_logits(p, l, f);
    EXPECT_EQ(a.tokens[l], std::max_element(z.begin(), z.end()) - z.begin());
  }
}

TEST(Policy, FixedSeedReproducesTrajectory) {
  const PolicyParams p = th::random_policy(4, 3, 5, 2);
  const Vector f{0.1, -0.2, 0.3, 0.4, -0.5};
  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_trajectory(p, f, 0.6, a), sample_trajectory(p, f, 0.6, b));
}

TEST(Policy, RecordsGenerationContext) {
  const PolicyParams p = th::random_policy(3, 2, 4, 3);
  const Vector f{1, 2, 3, 4};
  Rng rng(1);
  const Trajectory y = sample_trajectory(p, f, 0.6, rng);
  EXPECT_EQ(y.gen_features, f);
  EXPECT_NEAR(y.gen_log_prob, sampling_log_prob(p, f, y.tokens, 0.6), 1e-12);
}

TEST(Policy, BadTemperatureAndLogitsRejected) {
  PolicyParams p(3, 2, 4);
  Rng rng(1);
  const Vector f{1, 2, 3, 4};
  EXPECT_THROW(sample_trajectory(p, f, -0.1, rng), ContractError);
  EXPECT_THROW(sample_trajectory(p, f, std::numeric_limits<double>::quiet_NaN(), rng), ContractError);
  p.weight(1, 2, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sample_trajectory(p, f, 0.6, rng), NumericalError);
  EXPECT_THROW(sample_trajectory(p, Vector{1, 2}, 0.6, rng), ContractError);
}

TEST(Policy, ZeroParamsLogProbIsUniform) {
  const PolicyParams p(8, 4, 16);
  const Vector f(16, 0.3);
  EXPECT_NEAR(log_prob(p, f, Tokens{1, 2, 3, 4}), 4 * std::log(1.0 / 8), 1e-12);
}

TEST(Policy, LogProbNonPositiveAndNormalized) {
  for (int V = 2; V <= 4; ++V) {
    for (int L = 1; L <= 3; ++L) {
      const PolicyParams p = th::random_policy(V, L, 5, static_cast<std::uint64_t>(V * 10 + L), 1.0);
      Rng vr(V + L);
      const Vector f = th::random_vector(5, vr);
      double total = 0.0;
      for (const auto& t : oracle::enumerate_policy(p, f)) {
        const double lp = log_prob(p, f, t.tokens);
        EXPECT_LE(lp, 0.0);
        EXPECT_NEAR(lp, t.log_prob, 1e-12);
        total += std::exp(lp);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Policy, LargerTrueLogitIncreasesLogProb) {
  PolicyParams p(8, 4, 16);
  const Vector f(16, 0.0);
  const Tokens y{1, 2, 3, 4};
  const double uniform = log_prob(p, f, y);
  for (int l = 0; l < 4; ++l) p.bias(l, y[l]) = 0.5;
  EXPECT_GT(log_prob(p, f, y), uniform);
}

TEST(Policy, GradientMatchesFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const int V = 2 + static_cast<int>(rng.below(4));
    const int L = 1 + static_cast<int>(rng.below(3));
    const int d = 2 + static_cast<int>(rng.below(5));
    const PolicyParams p = th::random_policy(V, L, d, rng.next());
    const Vector f = th::random_vector(d, rng);
    Tokens y(static_cast<std::size_t>(L));
    for (int& t : y) t = static_cast<int>(rng.below(static_cast<std::size_t>(V)));
    const PolicyParams g = grad_log_prob(p, f, y);
    const std::vector<double> fd = oracle::finite_diff_grad(p, f, y, 1e-5);
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_LE(std::abs(g.at(i) - fd[i]), 1e-5 * std::max(1.0, std::abs(fd[i]))) << "trial " << trial << " i " << i;
  }
}

TEST(Policy, BiasGradientClosedForm) {
  const PolicyParams p(2, 1, 4);
  const Vector f{0.2, 0.1, -0.3, 0.5};
  const PolicyParams g0 = grad_log_prob(p, f, Tokens{0});
  EXPECT_DOUBLE_EQ(g0.bias(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g0.bias(0, 1), -0.5);
  const PolicyParams g1 = grad_log_prob(p, f, Tokens{1});
  EXPECT_DOUBLE_EQ(g1.bias(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(g1.bias(0, 1), 0.5);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(g1.weight(0, 1, k), 0.5 * f[k]);
}

TEST(Policy, ScoreFunctionIdentity) {
  for (int V = 2; V <= 4; ++V) {
    for (int L = 1; L <= 3; ++L) {
      const PolicyParams p = th::random_policy(V, L, 4, static_cast<std::uint64_t>(100 + V * L), 1.0);
      Rng vr(V * 7 + L);
      const Vector f = th::random_vector(4, vr);
      PolicyParams acc(V, L, 4);
      for (const auto& t : oracle::enumerate_policy(p, f)) add_grad_log_prob(p, f, t.tokens, t.prob, acc);
      for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_LE(std::abs(acc.at(i)), 1e-8);
    }
  }
}

TEST(Policy, SamplingFrequenciesMatchLogProb) {
  const PolicyParams p = th::random_policy(2, 2, 3, 77, 1.0);
  const Vector f{0.4, -0.8, 1.2};
  Rng rng(8);
  const int n = 100000;
  std::map<Tokens, int> counts;
  for (int i = 0; i < n; ++i) ++counts[sample_trajectory(p, f, 1.0, rng).tokens];
  for (const auto& t : oracle::enumerate_policy(p, f)) {
    const double q = std::exp(log_prob(p, f, t.tokens));
    const double sigma = std::sqrt(n * q * (1 - q));
    EXPECT_LE(std::abs(counts[t.tokens] - n * q), 4 * sigma);
  }
}

TEST(Policy, TemperatureSharpensDistribution) {
  const PolicyParams p = th::random_policy(3, 2, 3, 9, 1.0);
  const Vector f{0.5, 0.5, 0.5};
  double total = 0.0;
  for (const auto& t : oracle::enumerate_policy(p, f)) total += std::exp(sampling_log_prob(p, f, t.tokens, 0.6));
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Policy, CheckpointRoundTripIsBitExact) {
  const std::string dir = th::temp_dir("policy_ckpt");
  PolicyParams p = th::random_policy(8, 4, 16, 5, 3.0);
  p.at(0) = 1.0 / 3.0;
  p.at(1) = -0.0;
  p.at(2) = 5e-324;
  p.at(3) = 1.7976931348623157e308;
  for (CheckpointFormat fmt : {CheckpointFormat::text, CheckpointFormat::binary}) {
    const std::string path = dir + (fmt == CheckpointFormat::text ? "/p.txt" : "/p.bin");
    save_checkpoint(path, p, fmt);
    const PolicyParams q = load_checkpoint(path);
    EXPECT_TRUE(th::bit_equal(p, q));
  }
}

TEST(Policy, CheckpointErrors) {
  const std::string dir = th::temp_dir("policy_ckpt_bad");
  EXPECT_THROW(load_checkpoint(dir + "/none"), IoError);
  {
    std::ofstream(dir + "/garbage") << "hello world\n";
  }
  EXPECT_THROW(load_checkpoint(dir + "/garbage"), ParseError);
  {
    std::ofstream(dir + "/short") << "p2o-policy-text 2 1 2\n0.5 0.25\n";
  }
  EXPECT_THROW(load_checkpoint(dir + "/short"), ParseError);
}
