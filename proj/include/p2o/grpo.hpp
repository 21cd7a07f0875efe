#pragma once

#include <optional>
#include <span>
#include <vector>

#include "p2o/env.hpp"
#include "p2o/policy.hpp"
#include "p2o/rng.hpp"

namespace p2o {

struct GroupConfig {
  int K = 6;
  double temperature = 0.6;
  double lr = 0.05;
  std::optional<double> clip_ratio;  // PPO-style ratio clipping when set
  double kl_coeff = 0.0;             // beta; KL toward a stored reference when > 0
  int batch_size = 16;               // samples per policy update

  void validate() const;
};

struct RolloutGroup {
  int sample_id = 0;
  std::vector<Trajectory> trajectories;
  std::vector<int> rewards;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> advantages;
  std::vector<std::optional<int>> template_ids;  // per rollout; nullopt when generated without a template
};

struct MiningConfig {
  double tau = 0.01;
  void validate() const;
};

struct HardSet {
  int epoch = 0;
  std::vector<int> ids;  // dataset order, no duplicates
};

// A template assigned to one rollout, with the id it carries in logs.
struct AssignedTemplate {
  int id = 0;
  const Template* templ = nullptr;
};

// (r - mean) / std with population std; an all-equal group yields exact zeros.
std::vector<double> compute_advantages(std::span<const double> rewards);

// K rollouts for one sample. When templates are given (exactly K of them),
// rollout k is generated from insert_template(x, templates[k]).
RolloutGroup rollout_group(const PolicyParams& params, const Sample& x,
                           std::optional<std::span<const AssignedTemplate>> templates, const GroupConfig& cfg,
                           Rng& rng);

// Sample ids whose group mean reward is strictly below tau, in the order the
// groups are given.
HardSet mine_hard(std::span<const RolloutGroup> groups, const MiningConfig& cfg, int epoch = 0);

// One entry of a policy-gradient batch. gradient_features is the context the
// log-probability is differentiated under; trajectory.gen_features is the
// context the trajectory was sampled from.
struct UpdateItem {
  int sample_id = 0;
  Vector gradient_features;
  Trajectory trajectory;
  double advantage = 0.0;
  std::optional<int> used_template_id;
};

// params += lr * sum_i w_i * A_i * grad log pi(y_i | gradient_features_i), summed in
// batch order. w_i = 1 unless clip_ratio is set (PPO ratio of the tempered
// sampling distribution against the stored generation log-prob, zeroed when
// clipped). With kl_coeff > 0 and a reference,
// lr * beta * grad KL(pi || ref) is subtracted per item.
void policy_update(PolicyParams& params, std::span<const UpdateItem> batch, const GroupConfig& cfg,
                   const PolicyParams* reference = nullptr);

// KL(pi(.|x) || ref(.|x)) summed over positions.
double kl_divergence(const PolicyParams& params, const PolicyParams& reference, std::span<const double> features);

}  // namespace p2o
