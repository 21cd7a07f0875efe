#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2o/env.hpp"
#include "p2o/gepa.hpp"
#include "p2o/grpo.hpp"
#include "p2o/policy.hpp"
#include "p2o/reflection.hpp"

namespace p2o {

enum class RunMode { p2o, grpo_only, no_distill, same_template_in_group };
enum class ReflectorKind { feedback_guided, random, external };

const char* to_string(RunMode m);
const char* to_string(ReflectorKind k);
RunMode parse_run_mode(const std::string& s);
ReflectorKind parse_reflector_kind(const std::string& s);

// Supervised warm start that turns the zero-initialized policy into a base
// policy for the easy distribution (the analog of a pretrained backbone).
// epochs == 0 disables it.
struct WarmStartConfig {
  int corpus_size = 512;
  int epochs = 20;
  double lr = 0.5;
  int batch_size = 16;
};

struct RunConfig {
  EnvConfig env;
  GroupConfig group;
  MiningConfig mining;
  GepaConfig gepa;
  int n_epochs = 5;
  RunMode mode = RunMode::p2o;
  ReflectorKind reflector = ReflectorKind::feedback_guided;
  std::uint64_t seed = 0;

  WarmStartConfig warm_start;
  int reflector_steps = 16;           // hill-climb steps per feedback-guided proposal
  ExternalReflectorConfig external;   // used when reflector == external
  int eval_rollouts = 6;              // rollouts per sample for accuracy and pass@K
  bool log_wall_time = false;         // false writes 0 so metrics files are reproducible
  int threads = 1;                    // rollout workers; results do not depend on it

  // Desk-scale defaults for the comparison experiments.
  static RunConfig desk_default();
  void validate() const;
};

// Strict JSON mapping: field names mirror the structs above; unknown keys are
// a ConfigError. Missing keys keep their defaults; a missing env.seed follows
// the top-level seed.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

// Sets a dotted key ("group.K", "mode") in a config document.
void set_config_value(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value);

struct EpochMetrics {
  int epoch = 0;
  double mean_train_reward = 0.0;
  int hard_count = 0;
  double val_accuracy = 0.0;
  double hard_subset_accuracy = 0.0;
  std::optional<double> pass_at_1;
  std::optional<double> pass_at_K;
  std::optional<double> pass_at_1_templated;
  std::optional<double> pass_at_K_templated;
  int gepa_budget_used = 0;
  double wall_time = 0.0;
};

struct MetricsRecord {
  std::string run_id;
  std::string mode;
  std::uint64_t seed = 0;
  EpochMetrics metrics;
};

nlohmann::json to_json(const MetricsRecord& r);
MetricsRecord metrics_record_from_json(const nlohmann::json& j);  // throws ParseError on missing fields

struct RunResult {
  std::vector<EpochMetrics> epochs;
  PolicyParams final_params;
  std::vector<GepaEvent> gepa_events;
  std::optional<GepaResult> last_gepa;
  int gepa_invocations = 0;
  std::uint64_t eval_template_insertions = 0;  // non-empty insertions observed during evaluation
};

// Output directory layout (all optional when out_dir is empty):
//   metrics.jsonl, gepa_events.jsonl, templates.jsonl, config.json, epoch_<t>.ckpt
struct RunOutput {
  std::string out_dir;
  std::string run_id;  // default "<mode>-seed<seed>"
  CheckpointFormat checkpoint_format = CheckpointFormat::text;
};

RunResult run_p2o(const RunConfig& cfg, const RunOutput& output = {});

// Supervised fit of the target sequences (advantage 1 on the teacher trajectory).
void warm_start(PolicyParams& params, const EnvConfig& env, const WarmStartConfig& ws, std::uint64_t seed);

struct Accuracy {
  double overall = 0.0;
  std::optional<double> planted_hard;
  std::optional<double> easy;
};

// Mean per-rollout success over `rollouts` raw-input rollouts per sample.
Accuracy evaluate_accuracy(const PolicyParams& params, std::span<const Sample> samples, int rollouts,
                           double temperature, std::uint64_t seed);

struct Report {
  std::string epoch_csv;   // one row per (run, epoch), every metrics field
  std::string table_csv;   // per-seed final hard_subset_accuracy / val_accuracy by mode, plus medians
};

Report report(std::span<const std::string> metrics_files);
std::vector<MetricsRecord> read_metrics_file(const std::string& path);  // ParseError names the line

// Human-readable dump of one templates.jsonl record (epoch < 0: the last one).
std::string inspect_templates(const std::string& run_dir, int epoch = -1);

}  // namespace p2o
