#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracle.hpp"
#include "p2o/error.hpp"

using namespace p2o;
namespace th = testing_helpers;

// The oracles are checked against hand-computed cases so the oracle-vs-
// implementation tests mean something.

TEST(Oracle, ParetoHandCases) {
  EXPECT_EQ(oracle::pareto_front_bruteforce({{1, 1, 0}, {1, 0, 0}, {0, 1, 1}}), (std::vector<int>{0, 2}));
  EXPECT_EQ(oracle::pareto_front_bruteforce({{1, 0}, {1, 0}}), (std::vector<int>{0, 1}));
  EXPECT_EQ(oracle::pareto_front_bruteforce({{0, 0}, {0, 1}, {1, 1}}), (std::vector<int>{2}));
  EXPECT_TRUE(oracle::pareto_front_bruteforce({}).empty());
  EXPECT_THROW(oracle::pareto_front_bruteforce(oracle::ScoreMatrix(65, std::vector<int>{1})), oracle::LimitExceeded);
}

TEST(Oracle, EnumerationOfUniformPolicy) {
  const PolicyParams p(3, 2, 2);
  const auto all = oracle::enumerate_policy(p, {0.3, 0.1});
  ASSERT_EQ(all.size(), 9u);
  EXPECT_EQ(all[0].tokens, (Tokens{0, 0}));
  EXPECT_EQ(all[1].tokens, (Tokens{0, 1}));
  EXPECT_EQ(all[8].tokens, (Tokens{2, 2}));
  for (const auto& t : all) EXPECT_NEAR(t.prob, 1.0 / 9.0, 1e-15);
  EXPECT_THROW(oracle::enumerate_policy(PolicyParams(8, 5, 2), {0, 0}), oracle::LimitExceeded);
}

TEST(Oracle, TwoTokenClosedForm) {
  PolicyParams p(2, 1, 1);
  p.bias(0, 1) = std::log(3.0);
  EXPECT_NEAR(oracle::reference_log_prob(p, {0.0}, {1}), std::log(0.75), 1e-15);
  const auto g = oracle::finite_diff_grad(p, {0.0}, {1}, 1e-5);
  // d/db1 log sigma = 1 - 0.75.
  EXPECT_NEAR(g[p.size() - 1], 0.25, 1e-9);
  EXPECT_NEAR(g[p.size() - 2], -0.25, 1e-9);
}

TEST(Oracle, BinaryAdvantageHandValues) {
  const auto a = oracle::binary_advantages(6, 1);
  EXPECT_NEAR(a.success, 2.2360679774997896, 1e-15);
  EXPECT_NEAR(a.failure, -0.4472135954999579, 1e-15);
  EXPECT_THROW(oracle::binary_advantages(6, 0), std::invalid_argument);
  EXPECT_THROW(oracle::binary_advantages(6, 6), std::invalid_argument);
}

TEST(Oracle, LedgerReplayGrammar) {
  using K = GepaEventKind;
  const auto ev = [](K k, int c) { return GepaEvent{k, c, 0, 0, {}}; };
  const std::vector<GepaEvent> good{ev(K::init_eval, 5),  ev(K::parent_eval, 4), ev(K::child_eval, 4),
                                    ev(K::accept, 5),     ev(K::parent_eval, 4), ev(K::reflect_fail, 0),
                                    ev(K::parent_eval, 4), ev(K::child_eval, 4), ev(K::reject, 0)};
  EXPECT_EQ(oracle::ledger_replay(good, 4, 5), 30);
  EXPECT_EQ(oracle::ledger_replay({}, 4, 5), 0);

  auto bad_cost = good;
  bad_cost[3].cost = 4;
  EXPECT_THROW(oracle::ledger_replay(bad_cost, 4, 5), AuditError);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(oracle::ledger_replay(truncated, 4, 5), AuditError);
  auto reordered = good;
  std::swap(reordered[1], reordered[2]);
  EXPECT_THROW(oracle::ledger_replay(reordered, 4, 5), AuditError);
  EXPECT_THROW(oracle::ledger_replay({ev(K::parent_eval, 4)}, 4, 5), AuditError);
}

TEST(Oracle, GreedyCoverHandCases) {
  // a, b, c = 0, 1, 2
  EXPECT_EQ(oracle::greedy_cover_reference({{0, 1}, {1, 2}, {2}}), (std::vector<int>{0, 1}));
  EXPECT_EQ(oracle::greedy_cover_reference({{}, {0}, {0}}), (std::vector<int>{1}));
  EXPECT_TRUE(oracle::greedy_cover_reference({{}, {}}).empty());
}

TEST(Oracle, CoverAuditRejectsBadTraces) {
  const std::vector<std::vector<int>> sets{{0, 1}, {1, 2}, {2}};
  EXPECT_EQ(oracle::audit_cover_trace(sets, {{0, 2}, {1, 1}}), "");
  EXPECT_EQ(oracle::audit_cover_trace(sets, {{0, 2}, {2, 1}}), "");  // ties are legal greedy picks
  EXPECT_NE(oracle::audit_cover_trace(sets, {{2, 1}, {0, 2}}), "");
  EXPECT_NE(oracle::audit_cover_trace(sets, {{0, 2}}), "");
  EXPECT_NE(oracle::audit_cover_trace(sets, {{0, 1}, {1, 1}}), "");
  EXPECT_NE(oracle::audit_cover_trace(sets, {{0, 2}, {1, 1}, {2, 0}}), "");
}
