#include <gtest/gtest.h>

#include "helpers.hpp"
#include "p2o/distill.hpp"
#include "p2o/error.hpp"

using namespace p2o;
namespace th = testing_helpers;

namespace {

struct Scenario {
  std::vector<Sample> data;
  TemplateSpace space;
  PolicyParams params;
};

Scenario scenario() {
  EnvConfig env;
  env.n_easy = 4;
  env.n_hard = 4;
  return {make_dataset(env), TemplateSpace(env), th::random_policy(8, 4, 16, 3)};
}

// Same tokens and advantages for every template choice; only the generation
// context differs.
RolloutGroup constructed_group(const Sample& x, const std::vector<const Template*>& used) {
  RolloutGroup g;
  g.sample_id = x.id;
  const std::vector<Tokens> ys{{0, 1, 2, 3}, {1, 1, 1, 1}, {x.target}, {7, 6, 5, 4}, {2, 2, 0, 0}, {3, 1, 4, 1}};
  std::vector<double> rewards;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    Trajectory t;
    t.tokens = ys[k];
    t.gen_features = insert_template(x, *used[k]).features;
    g.trajectories.push_back(t);
    g.rewards.push_back(reward(x, t.tokens, 8));
    rewards.push_back(g.rewards.back());
    g.template_ids.push_back(used[k]->is_empty() ? std::optional<int>() : std::optional<int>(static_cast<int>(k)));
  }
  g.advantages = compute_advantages(rewards);
  return g;
}

PolicyParams updated(const PolicyParams& start, const std::vector<UpdateItem>& batch) {
  PolicyParams p = start;
  policy_update(p, batch, GroupConfig{});
  return p;
}

}  // namespace

TEST(Distill, GradientFeaturesAreOriginalInDistillMode) {
  Scenario s = scenario();
  const Template z = s.space.make({1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<const Template*> used(6, &z);
  const std::vector<RolloutGroup> groups{constructed_group(s.data[1], used)};
  const auto batch = build_distill_batch(groups, s.data, DistillMode::distill);
  ASSERT_EQ(batch.size(), 6u);
  for (const auto& it : batch) {
    EXPECT_EQ(it.gradient_features, s.data[1].features);
    EXPECT_NE(it.trajectory.gen_features, s.data[1].features);
    EXPECT_EQ(it.used_template_id.has_value(), true);
  }
  const auto dep = build_distill_batch(groups, s.data, DistillMode::dependency);
  for (const auto& it : dep) EXPECT_EQ(it.gradient_features, it.trajectory.gen_features);
}

TEST(Distill, UpdatesInvariantToGenerationTemplate) {
  Scenario s = scenario();
  const Template eps = s.space.empty();
  const Template z1 = s.space.make({1, 2, 3, 4, 5, 6, 7, 8});
  const Template z2 = s.space.make({9, 9, 9, 9, 0, 0, 0, 31});
  const Sample& x = s.data[5];
  const auto g_eps = constructed_group(x, std::vector<const Template*>(6, &eps));
  const auto g_z1 = constructed_group(x, std::vector<const Template*>(6, &z1));
  const auto g_mix = constructed_group(x, {&z1, &z2, &eps, &z2, &z1, &eps});

  const auto upd = [&](const RolloutGroup& g, DistillMode m) {
    return updated(s.params, build_distill_batch(std::vector<RolloutGroup>{g}, s.data, m));
  };
  const PolicyParams a = upd(g_eps, DistillMode::distill);
  EXPECT_TRUE(th::bit_equal(a, upd(g_z1, DistillMode::distill)));
  EXPECT_TRUE(th::bit_equal(a, upd(g_mix, DistillMode::distill)));
  EXPECT_FALSE(th::bit_equal(a, s.params));

  // Dependency mode sees the template.
  EXPECT_TRUE(th::bit_equal(a, upd(g_eps, DistillMode::dependency)));
  EXPECT_FALSE(th::bit_equal(a, upd(g_z1, DistillMode::dependency)));
  EXPECT_FALSE(th::bit_equal(a, upd(g_mix, DistillMode::dependency)));
}

TEST(Distill, AdvantagesPassThroughUnchanged) {
  Scenario s = scenario();
  const Template eps = s.space.empty();
  const auto g = constructed_group(s.data[0], std::vector<const Template*>(6, &eps));
  const auto batch = build_distill_batch(std::vector<RolloutGroup>{g}, s.data, DistillMode::distill);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(batch[k].advantage, g.advantages[k]);
    EXPECT_EQ(batch[k].trajectory, g.trajectories[k]);
    EXPECT_EQ(batch[k].sample_id, s.data[0].id);
  }
}

TEST(Distill, UnknownSampleRejected) {
  Scenario s = scenario();
  RolloutGroup g;
  g.sample_id = 999;
  EXPECT_THROW(build_distill_batch(std::vector<RolloutGroup>{g}, s.data, DistillMode::distill), DataError);
}
