#include "p2o/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "p2o/distill.hpp"
#include "p2o/error.hpp"

namespace p2o {

namespace {

using nlohmann::json;

enum : std::uint64_t {
  kTagWarmStart = 0xA1,
  kTagRollout = 0xB1,
  kTagGepa = 0xC1,
  kTagEval = 0xD1,
  kTagPassAtK = 0xE1,
  kTagDevSplit = 0xF1,
};

// Runs fn(i) for i in [0, n) on up to `threads` workers. fn must only touch
// slot i of any shared output.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    }));
  }
  for (auto& j : jobs) j.get();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// The templates most recently produced by Phase 2, indexed by pool id.
struct ActiveTemplates {
  GepaResult gepa;

  std::optional<std::vector<AssignedTemplate>> for_sample(int sample_id, RunMode mode) const {
    const std::vector<int>* ids = gepa.assignment.find(sample_id);
    if (!ids) return std::nullopt;
    std::vector<AssignedTemplate> out;
    for (std::size_t k = 0; k < ids->size(); ++k) {
      const int id = mode == RunMode::same_template_in_group ? ids->front() : (*ids)[k];
      out.push_back({id, &gepa.pool[static_cast<std::size_t>(id)].templ});
    }
    return out;
  }

  bool has_nonempty() const {
    for (int id : gepa.assignment.covered)
      if (!gepa.pool[static_cast<std::size_t>(id)].templ.is_empty()) return true;
    return false;
  }
};

struct PassAtK {
  double pass_at_1 = 0.0;
  double pass_at_k = 0.0;
};

// K rollouts per dev sample. Rollout k of sample n uses the same random stream
// with and without templates, so the two variants differ only by the template.
PassAtK pass_at_k(const PolicyParams& params, const std::vector<const Sample*>& samples, const ActiveTemplates* active,
                  RunMode mode, int K, double temperature, std::uint64_t seed) {
  PassAtK out;
  if (samples.empty()) return out;
  // Integer tallies, so equal success rates give bit-equal doubles.
  long total_successes = 0;
  long solved = 0;
  for (const Sample* x : samples) {
    Rng rng(seed, {static_cast<std::uint64_t>(x->id)});
    std::optional<std::vector<AssignedTemplate>> templates;
    if (active) templates = active->for_sample(x->id, mode);
    int successes = 0;
    for (int k = 0; k < K; ++k) {
      const Template* z = templates ? (*templates)[static_cast<std::size_t>(k) % templates->size()].templ : nullptr;
      const Vector features = z ? insert_template(*x, *z).features : x->features;
      const Trajectory y = sample_trajectory(params, features, temperature, rng);
      successes += reward(*x, y.tokens, params.vocab_size());
    }
    total_successes += successes;
    solved += successes > 0;
  }
  const double n = static_cast<double>(samples.size());
  out.pass_at_1 = static_cast<double>(total_successes) / (n * K);
  out.pass_at_k = static_cast<double>(solved) / n;
  return out;
}

json templates_record(int epoch, const GepaResult& g) {
  json covered = json::array();
  for (int id : g.assignment.covered) {
    const ScoredTemplate& t = g.pool[static_cast<std::size_t>(id)];
    covered.push_back({{"id", id},
                       {"genome", t.templ.is_empty() ? json("empty") : json(*t.templ.genome())},
                       {"dev_scores", t.dev_scores},
                       {"mean_score", t.mean_score}});
  }
  return {{"epoch", epoch},
          {"dev_ids", g.split.dev},
          {"pool_size", g.pool.size()},
          {"empty_fallback", g.assignment.empty_fallback},
          {"covered", std::move(covered)}};
}

class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& path) {
    if (path.empty()) return;
    out_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*out_) throw IoError("cannot open for writing: " + path.string());
  }
  void write(const json& j) {
    if (!out_) return;
    *out_ << j.dump() << '\n';
    out_->flush();
    if (!*out_) throw IoError("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> out_;
};

}  // namespace

void warm_start(PolicyParams& params, const EnvConfig& env, const WarmStartConfig& ws, std::uint64_t seed) {
  if (ws.epochs == 0 || ws.corpus_size == 0) return;
  EnvConfig corpus_cfg = env;
  corpus_cfg.n_easy = ws.corpus_size;
  corpus_cfg.n_hard = 0;
  const std::vector<Sample> corpus = make_dataset(corpus_cfg, Split::pretrain);

  GroupConfig sgd;
  sgd.lr = ws.lr;
  Rng rng(seed, {kTagWarmStart});
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < ws.epochs; ++e) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(ws.batch_size)) {
      std::vector<UpdateItem> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + ws.batch_size); ++i) {
        const Sample& s = corpus[order[i]];
        UpdateItem item;
        item.sample_id = s.id;
        item.gradient_features = s.features;
        item.trajectory.tokens = s.target;
        item.trajectory.gen_features = s.features;
        item.advantage = 1.0;
        batch.push_back(std::move(item));
      }
      policy_update(params, batch, sgd);
    }
  }
}

Accuracy evaluate_accuracy(const PolicyParams& params, std::span<const Sample> samples, int rollouts,
                           double temperature, std::uint64_t seed) {
  Accuracy acc;
  if (samples.empty()) return acc;
  long hard = 0, easy = 0;
  long n_hard = 0, n_easy = 0;
  for (const Sample& x : samples) {
    Rng rng(seed, {static_cast<std::uint64_t>(x.id)});
    int successes = 0;
    for (int r = 0; r < rollouts; ++r) {
      const Trajectory y = sample_trajectory(params, x.features, temperature, rng);
      successes += reward(x, y.tokens, params.vocab_size());
    }
    if (x.is_planted_hard) {
      hard += successes;
      ++n_hard;
    } else {
      easy += successes;
      ++n_easy;
    }
  }
  const auto rate = [&](long s, long n) { return static_cast<double>(s) / (static_cast<double>(n) * rollouts); };
  acc.overall = rate(hard + easy, n_hard + n_easy);
  if (n_hard > 0) acc.planted_hard = rate(hard, n_hard);
  if (n_easy > 0) acc.easy = rate(easy, n_easy);
  return acc;
}

RunResult run_p2o(const RunConfig& cfg, const RunOutput& output) {
  cfg.validate();
  const std::string run_id =
      output.run_id.empty() ? std::string(to_string(cfg.mode)) + "-seed" + std::to_string(cfg.seed) : output.run_id;

  namespace fs = std::filesystem;
  fs::path dir;
  if (!output.out_dir.empty()) {
    dir = output.out_dir;
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << to_json(cfg).dump(2) << '\n';
  }
  LineWriter metrics_out(dir.empty() ? fs::path() : dir / "metrics.jsonl");
  LineWriter events_out(dir.empty() ? fs::path() : dir / "gepa_events.jsonl");
  LineWriter templates_out(dir.empty() ? fs::path() : dir / "templates.jsonl");

  const std::vector<Sample> train = make_dataset(cfg.env, Split::train);
  const std::vector<Sample> heldout = make_dataset(cfg.env, Split::heldout);
  const TemplateSpace space(cfg.env);
  std::unordered_map<int, const Sample*> by_id;
  for (const Sample& s : train) by_id.emplace(s.id, &s);

  RunResult result;
  PolicyParams params(cfg.env.vocab_size, cfg.env.seq_len, cfg.env.feat_dim);
  warm_start(params, cfg.env, cfg.warm_start, cfg.seed);
  const PolicyParams reference = params;

  std::optional<ActiveTemplates> active;  // Z^(t); empty at t = 0
  const DistillMode distill_mode = cfg.mode == RunMode::no_distill ? DistillMode::dependency : DistillMode::distill;
  const bool use_templates = cfg.mode != RunMode::grpo_only;

  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t ep = static_cast<std::uint64_t>(epoch);

    // Phase 1: rollouts, group advantages, updates, hard-sample mining.
    std::vector<RolloutGroup> groups(train.size());
    const std::size_t batch = static_cast<std::size_t>(cfg.group.batch_size);
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t end = std::min(train.size(), start + batch);
      parallel_for(end - start, cfg.threads, [&](std::size_t off) {
        const Sample& x = train[start + off];
        Rng rng(cfg.seed, {kTagRollout, ep, static_cast<std::uint64_t>(x.id)});
        std::optional<std::vector<AssignedTemplate>> assigned;
        if (use_templates && active) assigned = active->for_sample(x.id, cfg.mode);
        if (assigned) {
          groups[start + off] =
              rollout_group(params, x, std::span<const AssignedTemplate>(*assigned), cfg.group, rng);
        } else {
          groups[start + off] = rollout_group(params, x, std::nullopt, cfg.group, rng);
        }
      });
      const std::span<const RolloutGroup> batch_groups(groups.data() + start, end - start);
      const std::vector<DistillBatchItem> items = build_distill_batch(batch_groups, train, distill_mode);
      policy_update(params, items, cfg.group, cfg.group.kl_coeff > 0.0 ? &reference : nullptr);
    }

    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (const RolloutGroup& g : groups)
      for (int r : g.rewards) {
        reward_sum += r;
        ++reward_count;
      }
    const HardSet hard = mine_hard(groups, cfg.mining, epoch + 1);

    // Phase 2: evolve templates for the new hard set.
    EpochMetrics m;
    m.epoch = epoch;
    m.mean_train_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
    m.hard_count = static_cast<int>(hard.ids.size());
    active.reset();
    std::vector<int> dev_ids;
    if (use_templates && hard.ids.size() >= 2) {
      std::unique_ptr<ReflectionOperator> reflector;
      switch (cfg.reflector) {
        case ReflectorKind::feedback_guided:
          reflector = std::make_unique<FeedbackGuidedReflector>(params, space, cfg.reflector_steps);
          break;
        case ReflectorKind::random:
          reflector = std::make_unique<RandomMutationReflector>(space);
          break;
        case ReflectorKind::external:
          reflector = std::make_unique<ExternalReflector>(cfg.external, space);
          break;
      }
      GepaResult g = gepa_run(hard, train, params, *reflector, cfg.gepa, cfg.group.K,
                              derive_seed(cfg.seed, {kTagGepa, ep}), epoch);
      ++result.gepa_invocations;
      m.gepa_budget_used = g.budget_used;
      for (const GepaEvent& e : g.events) {
        json ev = {{"event", to_string(e.kind)}, {"cost", e.cost}, {"template_id", e.template_id}, {"epoch", e.epoch}};
        if (!e.detail.empty()) ev["detail"] = e.detail;
        events_out.write(ev);
        result.gepa_events.push_back(e);
      }
      templates_out.write(templates_record(epoch, g));
      dev_ids = g.split.dev;
      active = ActiveTemplates{std::move(g)};
    } else if (hard.ids.size() >= 2) {
      Rng split_rng(cfg.seed, {kTagDevSplit, ep});
      dev_ids = split_hard(hard, cfg.gepa, split_rng)->dev;
    }

    // Evaluation. Accuracy always uses raw inputs.
    const std::uint64_t insertions_before = nonempty_template_insertions();
    const Accuracy acc = evaluate_accuracy(params, heldout, cfg.eval_rollouts, cfg.gepa.eval_temperature,
                                           derive_seed(cfg.seed, {kTagEval, ep}));
    result.eval_template_insertions += nonempty_template_insertions() - insertions_before;
    m.val_accuracy = acc.overall;
    m.hard_subset_accuracy = acc.planted_hard.value_or(0.0);

    if (!dev_ids.empty()) {
      std::vector<const Sample*> dev;
      for (int id : dev_ids) dev.push_back(by_id.at(id));
      const std::uint64_t pk_seed = derive_seed(cfg.seed, {kTagPassAtK, ep});
      const PassAtK raw = pass_at_k(params, dev, nullptr, cfg.mode, cfg.eval_rollouts, cfg.gepa.eval_temperature, pk_seed);
      m.pass_at_1 = raw.pass_at_1;
      m.pass_at_K = raw.pass_at_k;
      if (active && active->has_nonempty()) {
        const PassAtK with = pass_at_k(params, dev, &*active, cfg.mode, cfg.eval_rollouts,
                                       cfg.gepa.eval_temperature, pk_seed);
        m.pass_at_1_templated = with.pass_at_1;
        m.pass_at_K_templated = with.pass_at_k;
      }
    }

    if (!dir.empty()) {
      save_checkpoint((dir / ("epoch_" + std::to_string(epoch) + ".ckpt")).string(), params,
                      output.checkpoint_format);
    }
    if (cfg.log_wall_time)
      m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics_out.write(to_json(MetricsRecord{run_id, to_string(cfg.mode), cfg.seed, m}));
    result.epochs.push_back(m);
  }

  result.final_params = params;
  if (active) result.last_gepa = std::move(active->gepa);
  return result;
}

json to_json(const MetricsRecord& r) {
  const EpochMetrics& m = r.metrics;
  return {{"run_id", r.run_id},
          {"mode", r.mode},
          {"seed", r.seed},
          {"epoch", m.epoch},
          {"mean_train_reward", m.mean_train_reward},
          {"hard_count", m.hard_count},
          {"val_accuracy", m.val_accuracy},
          {"hard_subset_accuracy", m.hard_subset_accuracy},
          {"pass_at_1", optional_number(m.pass_at_1)},
          {"pass_at_K", optional_number(m.pass_at_K)},
          {"pass_at_1_templated", optional_number(m.pass_at_1_templated)},
          {"pass_at_K_templated", optional_number(m.pass_at_K_templated)},
          {"gepa_budget_used", m.gepa_budget_used},
          {"wall_time", m.wall_time}};
}

MetricsRecord metrics_record_from_json(const json& j) {
  static const char* const kFields[] = {"run_id",       "mode",         "seed",
                                        "epoch",        "mean_train_reward", "hard_count",
                                        "val_accuracy", "hard_subset_accuracy", "pass_at_1",
                                        "pass_at_K",    "pass_at_1_templated", "pass_at_K_templated",
                                        "gepa_budget_used", "wall_time"};
  if (!j.is_object()) throw ParseError("metrics record is not an object");
  for (const char* f : kFields)
    if (!j.contains(f)) throw ParseError(std::string("metrics record missing field ") + f);
  const auto opt = [&](const char* f) -> std::optional<double> {
    return j.at(f).is_null() ? std::nullopt : std::optional<double>(j.at(f).get<double>());
  };
  try {
    MetricsRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    EpochMetrics& m = r.metrics;
    m.epoch = j.at("epoch").get<int>();
    m.mean_train_reward = j.at("mean_train_reward").get<double>();
    m.hard_count = j.at("hard_count").get<int>();
    m.val_accuracy = j.at("val_accuracy").get<double>();
    m.hard_subset_accuracy = j.at("hard_subset_accuracy").get<double>();
    m.pass_at_1 = opt("pass_at_1");
    m.pass_at_K = opt("pass_at_K");
    m.pass_at_1_templated = opt("pass_at_1_templated");
    m.pass_at_K_templated = opt("pass_at_K_templated");
    m.gepa_budget_used = j.at("gepa_budget_used").get<int>();
    m.wall_time = j.at("wall_time").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics record has a malformed field: ") + e.what());
  }
}

}  // namespace p2o
