#include <set>

#include "p2o/error.hpp"
#include "p2o/harness.hpp"

namespace p2o {

namespace {

using nlohmann::json;

// Reads known keys out of one JSON object and rejects anything else.
class StrictObject {
 public:
  StrictObject(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <class T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void read_optional(const char* key, std::optional<T>& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    read(key, v);
    out = v;
  }

  const json* child(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.count(it.key())) throw ConfigError("unknown config key: " + context_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> known_;
};

void read_env(const json& j, EnvConfig& env, bool& seed_given) {
  StrictObject o(j, "env");
  o.read("vocab_size", env.vocab_size);
  o.read("seq_len", env.seq_len);
  o.read("feat_dim", env.feat_dim);
  o.read("n_easy", env.n_easy);
  o.read("n_hard", env.n_hard);
  o.read("n_hard_clusters", env.n_hard_clusters);
  seed_given = j.contains("seed");
  o.read("seed", env.seed);
  o.read("template_len", env.template_len);
  o.read("template_alphabet", env.template_alphabet);
  o.read("template_scale", env.template_scale);
  o.read("hard_offset_scale", env.hard_offset_scale);
  o.read("hard_target_jitter", env.hard_target_jitter);
  o.read("noise_scale", env.noise_scale);
  o.finish();
}

void read_group(const json& j, GroupConfig& g) {
  StrictObject o(j, "group");
  o.read("K", g.K);
  o.read("temperature", g.temperature);
  o.read("lr", g.lr);
  o.read_optional("clip_ratio", g.clip_ratio);
  o.read("kl_coeff", g.kl_coeff);
  o.read("batch_size", g.batch_size);
  o.finish();
}

void read_gepa(const json& j, GepaConfig& g) {
  StrictObject o(j, "gepa");
  o.read("C_total", g.C_total);
  o.read("B", g.B);
  o.read("W", g.W);
  o.read_optional("dev_size", g.dev_size);
  o.read("n_eval", g.n_eval);
  o.read("eval_temperature", g.eval_temperature);
  o.read("threads", g.threads);
  o.finish();
}

}  // namespace

const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::p2o: return "p2o";
    case RunMode::grpo_only: return "grpo_only";
    case RunMode::no_distill: return "no_distill";
    case RunMode::same_template_in_group: return "same_template_in_group";
  }
  return "unknown";
}

const char* to_string(ReflectorKind k) {
  switch (k) {
    case ReflectorKind::feedback_guided: return "feedback_guided";
    case ReflectorKind::random: return "random";
    case ReflectorKind::external: return "external";
  }
  return "unknown";
}

RunMode parse_run_mode(const std::string& s) {
  for (RunMode m : {RunMode::p2o, RunMode::grpo_only, RunMode::no_distill, RunMode::same_template_in_group})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown mode: " + s);
}

ReflectorKind parse_reflector_kind(const std::string& s) {
  for (ReflectorKind k : {ReflectorKind::feedback_guided, ReflectorKind::random, ReflectorKind::external})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown reflector: " + s);
}

RunConfig RunConfig::desk_default() {
  RunConfig cfg;
  cfg.env.n_easy = 192;
  cfg.env.n_hard = 64;
  cfg.n_epochs = 5;
  cfg.gepa.C_total = 2000;
  cfg.gepa.B = 4;
  return cfg;
}

void RunConfig::validate() const {
  env.validate();
  group.validate();
  mining.validate();
  gepa.validate();
  if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
  if (warm_start.epochs < 0 || warm_start.corpus_size < 0 || warm_start.batch_size < 1)
    throw ConfigError("warm_start: invalid sizes");
  if (warm_start.epochs > 0 && !(warm_start.lr > 0.0)) throw ConfigError("warm_start.lr must be positive");
  if (reflector_steps < 1) throw ConfigError("reflector_steps must be >= 1");
  if (eval_rollouts < 1) throw ConfigError("eval_rollouts must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (reflector == ReflectorKind::external && external.command.empty() == external.url.empty())
    throw ConfigError("external reflector needs exactly one of external.command or external.url");
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg = RunConfig::desk_default();
  StrictObject top(j, "config");
  top.read("seed", cfg.seed);
  bool env_seed_given = false;
  if (const json* e = top.child("env")) read_env(*e, cfg.env, env_seed_given);
  if (!env_seed_given) cfg.env.seed = cfg.seed;
  if (const json* g = top.child("group")) read_group(*g, cfg.group);
  if (const json* m = top.child("mining")) {
    StrictObject o(*m, "mining");
    o.read("tau", cfg.mining.tau);
    o.finish();
  }
  if (const json* g = top.child("gepa")) read_gepa(*g, cfg.gepa);
  top.read("n_epochs", cfg.n_epochs);
  std::string mode = to_string(cfg.mode);
  top.read("mode", mode);
  cfg.mode = parse_run_mode(mode);
  std::string reflector = to_string(cfg.reflector);
  top.read("reflector", reflector);
  cfg.reflector = parse_reflector_kind(reflector);
  if (const json* w = top.child("warm_start")) {
    StrictObject o(*w, "warm_start");
    o.read("corpus_size", cfg.warm_start.corpus_size);
    o.read("epochs", cfg.warm_start.epochs);
    o.read("lr", cfg.warm_start.lr);
    o.read("batch_size", cfg.warm_start.batch_size);
    o.finish();
  }
  top.read("reflector_steps", cfg.reflector_steps);
  if (const json* x = top.child("external")) {
    StrictObject o(*x, "external");
    o.read("command", cfg.external.command);
    o.read("url", cfg.external.url);
    o.read("path", cfg.external.path);
    o.read("timeout_ms", cfg.external.timeout_ms);
    o.finish();
  }
  top.read("eval_rollouts", cfg.eval_rollouts);
  top.read("log_wall_time", cfg.log_wall_time);
  top.read("threads", cfg.threads);
  top.finish();
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["env"] = {{"vocab_size", cfg.env.vocab_size},
              {"seq_len", cfg.env.seq_len},
              {"feat_dim", cfg.env.feat_dim},
              {"n_easy", cfg.env.n_easy},
              {"n_hard", cfg.env.n_hard},
              {"n_hard_clusters", cfg.env.n_hard_clusters},
              {"seed", cfg.env.seed},
              {"template_len", cfg.env.template_len},
              {"template_alphabet", cfg.env.template_alphabet},
              {"template_scale", cfg.env.template_scale},
              {"hard_offset_scale", cfg.env.hard_offset_scale},
              {"hard_target_jitter", cfg.env.hard_target_jitter},
              {"noise_scale", cfg.env.noise_scale}};
  j["group"] = {{"K", cfg.group.K},
                {"temperature", cfg.group.temperature},
                {"lr", cfg.group.lr},
                {"clip_ratio", cfg.group.clip_ratio ? json(*cfg.group.clip_ratio) : json(nullptr)},
                {"kl_coeff", cfg.group.kl_coeff},
                {"batch_size", cfg.group.batch_size}};
  j["mining"] = {{"tau", cfg.mining.tau}};
  j["gepa"] = {{"C_total", cfg.gepa.C_total},
               {"B", cfg.gepa.B},
               {"W", cfg.gepa.W},
               {"dev_size", cfg.gepa.dev_size ? json(*cfg.gepa.dev_size) : json(nullptr)},
               {"n_eval", cfg.gepa.n_eval},
               {"eval_temperature", cfg.gepa.eval_temperature},
               {"threads", cfg.gepa.threads}};
  j["n_epochs"] = cfg.n_epochs;
  j["mode"] = to_string(cfg.mode);
  j["reflector"] = to_string(cfg.reflector);
  j["warm_start"] = {{"corpus_size", cfg.warm_start.corpus_size},
                     {"epochs", cfg.warm_start.epochs},
                     {"lr", cfg.warm_start.lr},
                     {"batch_size", cfg.warm_start.batch_size}};
  j["reflector_steps"] = cfg.reflector_steps;
  j["external"] = {{"command", cfg.external.command},
                   {"url", cfg.external.url},
                   {"path", cfg.external.path},
                   {"timeout_ms", cfg.external.timeout_ms}};
  j["eval_rollouts"] = cfg.eval_rollouts;
  j["log_wall_time"] = cfg.log_wall_time;
  j["threads"] = cfg.threads;
  return j;
}

void set_config_value(json& doc, const std::string& dotted_key, const json& value) {
  if (dotted_key.empty()) throw ConfigError("empty config key");
  if (!doc.is_object()) doc = json::object();
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed config key: " + dotted_key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& next = (*node)[part];
    if (!next.is_object()) next = json::object();
    node = &next;
    start = dot + 1;
  }
}

}  // namespace p2o
