#include "p2o/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "p2o/error.hpp"

namespace p2o {

namespace {

Vector softmax(const Vector& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - mx));
  for (double& v : p) v /= s;
  return p;
}

// delta += scale * grad_theta KL(pi(.|x) || ref(.|x)).
void add_kl_grad(const PolicyParams& params, const PolicyParams& ref, std::span<const double> x, double scale,
                 PolicyParams& delta) {
  for (int l = 0; l < params.seq_len(); ++l) {
    const Vector p = softmax(position_logits(params, l, x));
    const Vector q = softmax(position_logits(ref, l, x));
    double kl = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
    for (int j = 0; j < params.vocab_size(); ++j) {
      const double g = p[j] > 0.0 ? p[j] * (std::log(p[j]) - std::log(q[j]) - kl) : 0.0;
      if (g == 0.0) continue;
      delta.bias(l, j) += scale * g;
      for (int k = 0; k < params.feat_dim(); ++k) delta.weight(l, j, k) += scale * g * x[k];
    }
  }
}

}  // namespace

void GroupConfig::validate() const {
  if (K < 2) throw ConfigError("group: K must be >= 2");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("group: temperature must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("group: lr must be positive");
  if (clip_ratio && !(*clip_ratio > 0.0)) throw ConfigError("group: clip_ratio must be positive");
  if (!(kl_coeff >= 0.0) || !std::isfinite(kl_coeff)) throw ConfigError("group: kl_coeff must be nonnegative");
  if (batch_size < 1) throw ConfigError("group: batch_size must be >= 1");
}

void MiningConfig::validate() const {
  if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("mining: tau must be in [0, 1)");
}

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const std::size_t k = rewards.size();
  if (k < 2) throw ConfigError("compute_advantages: group size must be >= 2");
  std::vector<double> adv(k, 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(k));
  if (sd == 0.0) return adv;
  for (std::size_t i = 0; i < k; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

RolloutGroup rollout_group(const PolicyParams& params, const Sample& x,
                           std::optional<std::span<const AssignedTemplate>> templates, const GroupConfig& cfg,
                           Rng& rng) {
  if (cfg.K < 2) throw ConfigError("rollout_group: K must be >= 2");
  if (templates && static_cast<int>(templates->size()) != cfg.K)
    throw ContractError("rollout_group: expected " + std::to_string(cfg.K) + " templates, got " +
                        std::to_string(templates->size()));
  RolloutGroup g;
  g.sample_id = x.id;
  g.trajectories.reserve(static_cast<std::size_t>(cfg.K));
  std::vector<double> r;
  for (int k = 0; k < cfg.K; ++k) {
    std::optional<int> tid;
    Trajectory y;
    if (templates) {
      const AssignedTemplate& a = (*templates)[k];
      tid = a.id;
      const AugmentedInput aug = insert_template(x, *a.templ);
      y = sample_trajectory(params, aug.features, cfg.temperature, rng);
    } else {
      y = sample_trajectory(params, x.features, cfg.temperature, rng);
    }
    const int rk = reward(x, y.tokens, params.vocab_size());
    g.rewards.push_back(rk);
    r.push_back(rk);
    g.template_ids.push_back(tid);
    g.trajectories.push_back(std::move(y));
  }
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= cfg.K;
  double var = 0.0;
  for (double v : r) var += (v - mean) * (v - mean);
  g.mean = mean;
  g.std = std::sqrt(var / cfg.K);
  g.advantages = compute_advantages(r);
  return g;
}

HardSet mine_hard(std::span<const RolloutGroup> groups, const MiningConfig& cfg, int epoch) {
  cfg.validate();
  HardSet h;
  h.epoch = epoch;
  for (const RolloutGroup& g : groups) {
    double mean = 0.0;
    for (int r : g.rewards) mean += r;
    if (!g.rewards.empty()) mean /= static_cast<double>(g.rewards.size());
    if (mean < cfg.tau && std::find(h.ids.begin(), h.ids.end(), g.sample_id) == h.ids.end()) h.ids.push_back(g.sample_id);
  }
  return h;
}

double kl_divergence(const PolicyParams& params, const PolicyParams& reference, std::span<const double> features) {
  double total = 0.0;
  for (int l = 0; l < params.seq_len(); ++l) {
    const Vector p = softmax(position_logits(params, l, features));
    const Vector q = softmax(position_logits(reference, l, features));
    for (std::size_t j = 0; j < p.size(); ++j)
      if (p[j] > 0.0) total += p[j] * (std::log(p[j]) - std::log(q[j]));
  }
  return total;
}

void policy_update(PolicyParams& params, std::span<const UpdateItem> batch, const GroupConfig& cfg,
                   const PolicyParams* reference) {
  cfg.validate();
  if (cfg.kl_coeff > 0.0 && reference == nullptr)
    throw ConfigError("policy_update: kl_coeff > 0 requires a reference policy");
  if (reference && !reference->same_shape(params)) throw ContractError("policy_update: reference shape mismatch");

  PolicyParams delta(params.vocab_size(), params.seq_len(), params.feat_dim());
  for (const UpdateItem& item : batch) {
    if (!std::isfinite(item.advantage))
      throw NumericalError("policy_update: non-finite advantage for sample " + std::to_string(item.sample_id));
    for (double f : item.gradient_features)
      if (!std::isfinite(f))
        throw NumericalError("policy_update: non-finite features for sample " + std::to_string(item.sample_id));

    double weight = item.advantage;
    if (cfg.clip_ratio && weight != 0.0) {
      const double eps = *cfg.clip_ratio;
      // Both log-probs live under the tempered sampling distribution.
      const double ratio = std::exp(
          sampling_log_prob(params, item.gradient_features, item.trajectory.tokens, cfg.temperature) -
          item.trajectory.gen_log_prob);
      const bool clipped = (weight > 0.0 && ratio > 1.0 + eps) || (weight < 0.0 && ratio < 1.0 - eps);
      weight = clipped ? 0.0 : ratio * weight;
    }
    if (weight != 0.0) add_grad_log_prob(params, item.gradient_features, item.trajectory.tokens, weight, delta);
    if (cfg.kl_coeff > 0.0) add_kl_grad(params, *reference, item.gradient_features, -cfg.kl_coeff, delta);
    if (!delta.all_finite())
      throw NumericalError("policy_update: non-finite gradient for sample " + std::to_string(item.sample_id));
  }
  // Only touch coordinates that received a contribution so zero-advantage
  // batches leave the parameters bit-identical.
  for (std::size_t i = 0; i < params.size(); ++i)
    if (delta.at(i) != 0.0) params.at(i) += cfg.lr * delta.at(i);
  if (!params.all_finite()) throw NumericalError("policy_update: parameters became non-finite");
}

}  // namespace p2o
