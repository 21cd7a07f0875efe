#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2o/env.hpp"
#include "p2o/grpo.hpp"
#include "p2o/policy.hpp"
#include "p2o/rng.hpp"

namespace p2o {

struct GepaConfig {
  int C_total = 2000;          // budget in per-sample template evaluations
  int B = 4;                   // mini-batch size
  int W = 16;                  // beam width of the Pareto front
  std::optional<int> dev_size; // absent: min(floor(|hard| / 2), 64)
  int n_eval = 4;              // rollouts per sample per evaluation
  double eval_temperature = 0.6;
  int threads = 1;             // candidate workers per sweep; results do not depend on it

  void validate() const;
  int resolve_dev_size(int hard_count) const;
};

struct ScoredTemplate {
  Template templ;
  std::vector<int> dev_scores;  // binary, one per dev sample
  double mean_score = 0.0;
  int parent = -1;              // pool id of the parent (-1 for the seed entry)
  double parent_minibatch_mean = 0.0;
  double minibatch_mean = 0.0;  // acceptance mini-batch mean of this template
};

ScoredTemplate make_scored(Template templ, std::vector<int> dev_scores);

// Indices {n : dev_scores[n] == 1}.
std::vector<int> coverage(const ScoredTemplate& t);

struct FeedbackItem {
  Vector features;   // original sample features
  Tokens prediction; // a failed rollout
  Tokens target;
};

struct FeedbackBundle {
  std::vector<FeedbackItem> items;
  bool empty() const { return items.empty(); }
};

// Stand-in for the reflection model: proposes an improved template from a
// parent and the failures it produced. Implementations must be safe to call
// concurrently. Failures are reported by throwing p2o::Error.
class ReflectionOperator {
 public:
  virtual ~ReflectionOperator() = default;
  virtual Template propose(const Template& parent, const FeedbackBundle& feedback, Rng& rng) const = 0;
};

struct HardSplit {
  std::vector<int> train;
  std::vector<int> dev;
};

// Returns nullopt (skip GEPA) when fewer than two hard samples exist.
std::optional<HardSplit> split_hard(const HardSet& hard, const GepaConfig& cfg, Rng& rng);

struct TemplateEvaluation {
  std::vector<int> scores;                // 1 iff any of n_eval rollouts succeeded
  std::vector<Tokens> first_predictions;  // first rollout per sample
};

// Each sample gets n_eval rollouts from insert_template(x, z) at eval_temperature.
// Costs samples.size() budget units.
TemplateEvaluation evaluate_template(const PolicyParams& params, const Template& z,
                                     std::span<const Sample* const> samples, const GepaConfig& cfg, Rng& rng);

// Strict Pareto dominance on equal-length score vectors.
bool dominates(std::span<const int> a, std::span<const int> b);
bool dominates(const ScoredTemplate& a, const ScoredTemplate& b);

// Pool indices not dominated by any other pool member, ascending.
std::vector<int> nondominated(std::span<const ScoredTemplate> pool);

// Nondominated set if it has at most W members; otherwise W of them drawn
// without replacement with probability proportional to mean dev score
// (uniform among the remainder once all remaining weights are zero).
std::vector<int> select_pareto_front(std::span<const ScoredTemplate> pool, int W, Rng& rng);

struct CoverStep {
  int pool_id = 0;
  int gain = 0;
};

struct AssignmentMap {
  std::vector<int> covered;           // greedy cover picks in selection order (empty on fallback)
  std::vector<CoverStep> cover_trace; // greedy picks with their marginal gains
  std::vector<int> hard_ids;          // D_hard order
  std::vector<std::vector<int>> templates;  // per hard id: K pool ids
  bool empty_fallback = false;        // nothing covered; every sample gets the empty template

  const std::vector<int>* find(int sample_id) const;
  std::size_t size() const { return hard_ids.size(); }
};

// Greedy set cover over dev coverage sets (ties to the lowest pool index),
// then K weighted draws with replacement per hard sample.
AssignmentMap greedy_prompt_assignment(std::span<const ScoredTemplate> pool, std::span<const int> hard_ids,
                                       std::span<const int> dev_ids, int K, Rng& rng);

enum class GepaEventKind { init_eval, parent_eval, child_eval, accept, reject, reflect_fail };

const char* to_string(GepaEventKind kind);
GepaEventKind parse_gepa_event_kind(const std::string& s);

struct GepaEvent {
  GepaEventKind kind = GepaEventKind::init_eval;
  int cost = 0;
  int template_id = 0;
  int epoch = 0;
  std::string detail;  // free-form context, e.g. the reflection error
};

struct GepaResult {
  HardSplit split;
  std::vector<ScoredTemplate> pool;  // pool[0] is the empty template
  AssignmentMap assignment;
  std::vector<GepaEvent> events;
  int budget_used = 0;
};

// Budgeted evolutionary search over templates for one hard set. Randomness is
// derived from `seed` per sweep and per front slot.
GepaResult gepa_run(const HardSet& hard, std::span<const Sample> dataset, const PolicyParams& params,
                    const ReflectionOperator& reflector, const GepaConfig& cfg, int K, std::uint64_t seed,
                    int epoch = 0);

}  // namespace p2o
