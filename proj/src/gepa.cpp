#include "p2o/gepa.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <unordered_map>

#include "p2o/error.hpp"

namespace p2o {

namespace {

enum : std::uint64_t {
  kTagSplit = 1,
  kTagInit = 2,
  kTagFront = 3,
  kTagCandidate = 4,
  kTagAssign = 5,
};

enum : std::uint64_t { kMinibatch = 1, kParentEval = 2, kPropose = 3, kChildEval = 4, kDevEval = 5 };

double mean_of(const std::vector<int>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (int x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Everything one front slot computes before its result is committed.
struct CandidateWork {
  int parent = 0;
  std::vector<int> minibatch;
  TemplateEvaluation parent_eval;
  std::optional<Template> child;
  std::string reflect_error;
  TemplateEvaluation child_eval;
  double parent_mean = 0.0;
  double child_mean = 0.0;
  bool improved = false;
  std::vector<int> child_dev_scores;
};

}  // namespace

void GepaConfig::validate() const {
  if (C_total <= 0) throw ConfigError("gepa: C_total must be positive");
  if (B < 1) throw ConfigError("gepa: B must be >= 1");
  if (W < 1) throw ConfigError("gepa: W must be >= 1");
  if (dev_size && *dev_size < 1) throw ConfigError("gepa: dev_size must be >= 1");
  if (n_eval < 1) throw ConfigError("gepa: n_eval must be >= 1");
  if (!(eval_temperature >= 0.0) || !std::isfinite(eval_temperature))
    throw ConfigError("gepa: eval_temperature must be >= 0");
  if (threads < 1) throw ConfigError("gepa: threads must be >= 1");
}

int GepaConfig::resolve_dev_size(int hard_count) const {
  const int requested = dev_size ? *dev_size : std::min(hard_count / 2, 64);
  return std::clamp(requested, 1, std::max(1, hard_count - 1));
}

ScoredTemplate make_scored(Template templ, std::vector<int> dev_scores) {
  ScoredTemplate s;
  s.templ = std::move(templ);
  s.mean_score = mean_of(dev_scores);
  s.dev_scores = std::move(dev_scores);
  return s;
}

std::vector<int> coverage(const ScoredTemplate& t) {
  std::vector<int> c;
  for (std::size_t n = 0; n < t.dev_scores.size(); ++n)
    if (t.dev_scores[n] == 1) c.push_back(static_cast<int>(n));
  return c;
}

std::optional<HardSplit> split_hard(const HardSet& hard, const GepaConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(hard.ids.size());
  if (n < 2) return std::nullopt;
  const int dev = cfg.resolve_dev_size(n);
  std::vector<int> order(hard.ids.begin(), hard.ids.end());
  // Partial Fisher-Yates: the first `dev` slots become the dev part.
  for (int i = 0; i < dev; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + rng.below(static_cast<std::size_t>(n - i));
    std::swap(order[i], order[j]);
  }
  HardSplit split;
  split.dev.assign(order.begin(), order.begin() + dev);
  std::sort(split.dev.begin(), split.dev.end(), [&](int a, int b) {
    return std::find(hard.ids.begin(), hard.ids.end(), a) < std::find(hard.ids.begin(), hard.ids.end(), b);
  });
  for (int id : hard.ids)
    if (std::find(split.dev.begin(), split.dev.end(), id) == split.dev.end()) split.train.push_back(id);
  return split;
}

TemplateEvaluation evaluate_template(const PolicyParams& params, const Template& z,
                                     std::span<const Sample* const> samples, const GepaConfig& cfg, Rng& rng) {
  TemplateEvaluation out;
  out.scores.reserve(samples.size());
  for (const Sample* x : samples) {
    const AugmentedInput aug = insert_template(*x, z);
    int solved = 0;
    Tokens first;
    for (int r = 0; r < cfg.n_eval; ++r) {
      Trajectory y = sample_trajectory(params, aug.features, cfg.eval_temperature, rng);
      if (r == 0) first = y.tokens;
      if (reward(*x, y.tokens, params.vocab_size()) == 1) solved = 1;
    }
    out.scores.push_back(solved);
    out.first_predictions.push_back(std::move(first));
  }
  return out;
}

bool dominates(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ContractError("dominates: score vectors differ in length");
  bool strictly = false;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n] < b[n]) return false;
    if (a[n] > b[n]) strictly = true;
  }
  return strictly;
}

bool dominates(const ScoredTemplate& a, const ScoredTemplate& b) { return dominates(a.dev_scores, b.dev_scores); }

std::vector<int> nondominated(std::span<const ScoredTemplate> pool) {
  std::vector<int> front;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pool.size() && !dominated; ++j)
      dominated = j != i && dominates(pool[j], pool[i]);
    if (!dominated) front.push_back(static_cast<int>(i));
  }
  return front;
}

std::vector<int> select_pareto_front(std::span<const ScoredTemplate> pool, int W, Rng& rng) {
  if (pool.empty()) throw ContractError("select_pareto_front: empty pool");
  if (W < 1) throw ContractError("select_pareto_front: W must be >= 1");
  std::vector<int> front = nondominated(pool);
  if (static_cast<int>(front.size()) <= W) return front;

  std::vector<int> picked;
  std::vector<double> weights;
  for (int i : front) weights.push_back(pool[i].mean_score);
  while (static_cast<int>(picked.size()) < W) {
    const std::size_t k = rng.categorical(weights);
    picked.push_back(front[k]);
    front.erase(front.begin() + static_cast<std::ptrdiff_t>(k));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return picked;
}

const std::vector<int>* AssignmentMap::find(int sample_id) const {
  for (std::size_t i = 0; i < hard_ids.size(); ++i)
    if (hard_ids[i] == sample_id) return &templates[i];
  return nullptr;
}

AssignmentMap greedy_prompt_assignment(std::span<const ScoredTemplate> pool, std::span<const int> hard_ids,
                                       std::span<const int> dev_ids, int K, Rng& rng) {
  if (pool.empty()) throw ContractError("greedy_prompt_assignment: empty pool");
  if (K < 1) throw ContractError("greedy_prompt_assignment: K must be >= 1");
  const std::size_t n_dev = pool.front().dev_scores.size();
  for (const ScoredTemplate& t : pool)
    if (t.dev_scores.size() != n_dev) throw ContractError("greedy_prompt_assignment: ragged score matrix");
  if (dev_ids.size() != n_dev) throw ContractError("greedy_prompt_assignment: dev id count != score length");

  AssignmentMap out;
  out.hard_ids.assign(hard_ids.begin(), hard_ids.end());

  // Step 1: greedy cover of dev samples.
  std::vector<char> covered_sample(n_dev, 0);
  std::vector<char> chosen(pool.size(), 0);
  while (true) {
    int best = -1;
    int best_gain = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (chosen[i]) continue;
      int gain = 0;
      for (std::size_t n = 0; n < n_dev; ++n) gain += (pool[i].dev_scores[n] == 1 && !covered_sample[n]) ? 1 : 0;
      if (gain > best_gain) {
        best_gain = gain;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    chosen[best] = 1;
    out.covered.push_back(best);
    out.cover_trace.push_back({best, best_gain});
    for (std::size_t n = 0; n < n_dev; ++n)
      if (pool[best].dev_scores[n] == 1) covered_sample[n] = 1;
  }

  // Step 2: K draws per hard sample.
  if (out.covered.empty()) {
    int empty_id = -1;
    for (std::size_t i = 0; i < pool.size() && empty_id < 0; ++i)
      if (pool[i].templ.is_empty()) empty_id = static_cast<int>(i);
    if (empty_id < 0) throw ContractError("greedy_prompt_assignment: nothing covered and no empty template in pool");
    out.empty_fallback = true;
    out.templates.assign(hard_ids.size(), std::vector<int>(static_cast<std::size_t>(K), empty_id));
    return out;
  }

  std::unordered_map<int, std::size_t> dev_index;
  for (std::size_t n = 0; n < dev_ids.size(); ++n) dev_index.emplace(dev_ids[n], n);

  for (int id : hard_ids) {
    std::vector<int> candidates;
    const auto it = dev_index.find(id);
    if (it != dev_index.end() && covered_sample[it->second]) {
      for (int t : out.covered)
        if (pool[t].dev_scores[it->second] == 1) candidates.push_back(t);
    } else {
      candidates = out.covered;
    }
    std::vector<double> weights;
    for (int t : candidates) weights.push_back(pool[t].mean_score);
    std::vector<int> draws;
    for (int k = 0; k < K; ++k) draws.push_back(candidates[rng.categorical(weights)]);
    out.templates.push_back(std::move(draws));
  }
  return out;
}

const char* to_string(GepaEventKind kind) {
  switch (kind) {
    case GepaEventKind::init_eval: return "init_eval";
    case GepaEventKind::parent_eval: return "parent_eval";
    case GepaEventKind::child_eval: return "child_eval";
    case GepaEventKind::accept: return "accept";
    case GepaEventKind::reject: return "reject";
    case GepaEventKind::reflect_fail: return "reflect_fail";
  }
  return "unknown";
}

GepaEventKind parse_gepa_event_kind(const std::string& s) {
  for (GepaEventKind k : {GepaEventKind::init_eval, GepaEventKind::parent_eval, GepaEventKind::child_eval,
                          GepaEventKind::accept, GepaEventKind::reject, GepaEventKind::reflect_fail})
    if (s == to_string(k)) return k;
  throw ParseError("unknown GEPA event kind: " + s);
}

GepaResult gepa_run(const HardSet& hard, std::span<const Sample> dataset, const PolicyParams& params,
                    const ReflectionOperator& reflector, const GepaConfig& cfg, int K, std::uint64_t seed,
                    int epoch) {
  cfg.validate();
  std::unordered_map<int, const Sample*> by_id;
  for (const Sample& s : dataset) by_id.emplace(s.id, &s);
  const auto lookup = [&](const std::vector<int>& ids) {
    std::vector<const Sample*> out;
    out.reserve(ids.size());
    for (int id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("gepa_run: unknown sample id " + std::to_string(id));
      out.push_back(it->second);
    }
    return out;
  };

  GepaResult result;
  Rng split_rng(seed, {kTagSplit});
  std::optional<HardSplit> split = split_hard(hard, cfg, split_rng);
  if (!split) throw ContractError("gepa_run: at least two hard samples are required");
  result.split = std::move(*split);
  const std::vector<const Sample*> dev = lookup(result.split.dev);
  const std::vector<const Sample*> train = lookup(result.split.train);
  const int dev_size = static_cast<int>(dev.size());
  const int B = cfg.B;

  int used = 0;
  const auto charge = [&](GepaEventKind kind, int cost, int template_id, std::string detail = {}) {
    used += cost;
    result.events.push_back({kind, cost, template_id, epoch, std::move(detail)});
  };

  {
    Rng init_rng(seed, {kTagInit});
    const Template eps = Template::empty(params.feat_dim());
    ScoredTemplate root = make_scored(eps, evaluate_template(params, eps, dev, cfg, init_rng).scores);
    result.pool.push_back(std::move(root));
    charge(GepaEventKind::init_eval, dev_size, 0);
  }

  const auto run_candidate = [&](int parent, std::uint64_t sweep, std::uint64_t slot) {
    CandidateWork w;
    w.parent = parent;
    const Template& z = result.pool[static_cast<std::size_t>(parent)].templ;

    Rng mb_rng(seed, {kTagCandidate, sweep, slot, kMinibatch});
    std::vector<const Sample*> minibatch;
    if (static_cast<int>(train.size()) >= B) {
      std::vector<std::size_t> idx(train.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (int i = 0; i < B; ++i) std::swap(idx[i], idx[i + mb_rng.below(idx.size() - i)]);
      for (int i = 0; i < B; ++i) minibatch.push_back(train[idx[i]]);
    } else {
      for (int i = 0; i < B; ++i) minibatch.push_back(train[mb_rng.below(train.size())]);
    }
    for (const Sample* s : minibatch) w.minibatch.push_back(s->id);

    Rng parent_rng(seed, {kTagCandidate, sweep, slot, kParentEval});
    w.parent_eval = evaluate_template(params, z, minibatch, cfg, parent_rng);
    w.parent_mean = mean_of(w.parent_eval.scores);

    FeedbackBundle feedback;
    for (std::size_t i = 0; i < minibatch.size(); ++i)
      if (w.parent_eval.scores[i] == 0)
        feedback.items.push_back({minibatch[i]->features, w.parent_eval.first_predictions[i], minibatch[i]->target});

    Rng propose_rng(seed, {kTagCandidate, sweep, slot, kPropose});
    try {
      w.child = reflector.propose(z, feedback, propose_rng);
    } catch (const Error& e) {
      w.reflect_error = e.what();
      return w;
    }

    Rng child_rng(seed, {kTagCandidate, sweep, slot, kChildEval});
    w.child_eval = evaluate_template(params, *w.child, minibatch, cfg, child_rng);
    w.child_mean = mean_of(w.child_eval.scores);
    w.improved = w.child_mean > w.parent_mean;
    if (w.improved) {
      Rng dev_rng(seed, {kTagCandidate, sweep, slot, kDevEval});
      w.child_dev_scores = evaluate_template(params, *w.child, dev, cfg, dev_rng).scores;
    }
    return w;
  };

  // A candidate starts only if its two mini-batch evaluations are affordable.
  const auto can_start = [&] { return cfg.C_total - used >= 2 * B; };

  for (std::uint64_t sweep = 0; can_start(); ++sweep) {
    Rng front_rng(seed, {kTagFront, sweep});
    const std::vector<int> front = select_pareto_front(result.pool, cfg.W, front_rng);

    std::vector<CandidateWork> work(front.size());
    std::size_t computed = 0;
    if (cfg.threads > 1) {
      // Pool snapshot is fixed for the sweep, so precomputing every slot gives
      // the same results as the serial path; unaffordable slots are dropped.
      std::size_t next = 0;
      while (next < front.size()) {
        const std::size_t end = std::min(front.size(), next + static_cast<std::size_t>(cfg.threads));
        std::vector<std::future<CandidateWork>> running;
        for (std::size_t i = next; i < end; ++i)
          running.push_back(std::async(std::launch::async, run_candidate, front[i], sweep, i));
        for (std::size_t i = next; i < end; ++i) work[i] = running[i - next].get();
        next = end;
      }
      computed = front.size();
    }

    bool stop = false;
    for (std::size_t i = 0; i < front.size(); ++i) {
      if (!can_start()) {
        stop = true;
        break;
      }
      if (i >= computed) work[i] = run_candidate(front[i], sweep, i);
      CandidateWork& w = work[i];
      charge(GepaEventKind::parent_eval, B, w.parent);
      if (!w.child) {
        charge(GepaEventKind::reflect_fail, 0, w.parent, w.reflect_error);
        continue;
      }
      charge(GepaEventKind::child_eval, B, w.parent);
      if (!w.improved) {
        charge(GepaEventKind::reject, 0, w.parent);
        continue;
      }
      ScoredTemplate child = make_scored(std::move(*w.child), std::move(w.child_dev_scores));
      child.parent = w.parent;
      child.parent_minibatch_mean = w.parent_mean;
      child.minibatch_mean = w.child_mean;
      result.pool.push_back(std::move(child));
      charge(GepaEventKind::accept, dev_size, static_cast<int>(result.pool.size() - 1));
    }
    if (stop) break;
  }

  result.budget_used = used;
  Rng assign_rng(seed, {kTagAssign});
  result.assignment = greedy_prompt_assignment(result.pool, hard.ids, result.split.dev, K, assign_rng);
  return result;
}

}  // namespace p2o
