#include "p2o/p2o.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "p2o/error.hpp"
#include "p2o/harness.hpp"

using nlohmann::json;

struct p2o_config {
  json doc;  // user-supplied document, overrides applied in place
  p2o::RunConfig cfg;
};

struct p2o_run {
  p2o::RunResult result;
  std::string run_id;
  std::string mode;
  std::uint64_t seed = 0;
};

struct p2o_policy {
  p2o::PolicyParams params;
};

struct p2o_dataset {
  std::vector<p2o::Sample> samples;
};

namespace {

thread_local std::string g_last_error;

p2o_status fail(p2o_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

p2o_status from_code(p2o::ErrorCode code) {
  switch (code) {
    case p2o::ErrorCode::config: return P2O_ERR_CONFIG;
    case p2o::ErrorCode::contract: return P2O_ERR_CONTRACT;
    case p2o::ErrorCode::numerical: return P2O_ERR_NUMERICAL;
    case p2o::ErrorCode::data: return P2O_ERR_DATA;
    case p2o::ErrorCode::parse: return P2O_ERR_PARSE;
    case p2o::ErrorCode::audit: return P2O_ERR_AUDIT;
    case p2o::ErrorCode::io: return P2O_ERR_IO;
    case p2o::ErrorCode::external: return P2O_ERR_EXTERNAL;
  }
  return P2O_ERR_INTERNAL;
}

// Runs fn and maps any exception to a status code.
template <class Fn>
p2o_status guarded(Fn&& fn) {
  try {
    fn();
    return P2O_OK;
  } catch (const p2o::Error& e) {
    return fail(from_code(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(P2O_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(P2O_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(P2O_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(P2O_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define P2O_REQUIRE(cond)                                                   \
  do {                                                                      \
    if (!(cond)) return fail(P2O_ERR_INVALID_ARGUMENT, "invalid argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* p2o_last_error(void) { return g_last_error.c_str(); }

const char* p2o_status_name(p2o_status status) {
  switch (status) {
    case P2O_OK: return "ok";
    case P2O_ERR_CONFIG: return "config";
    case P2O_ERR_CONTRACT: return "contract";
    case P2O_ERR_NUMERICAL: return "numerical";
    case P2O_ERR_DATA: return "data";
    case P2O_ERR_PARSE: return "parse";
    case P2O_ERR_AUDIT: return "audit";
    case P2O_ERR_IO: return "io";
    case P2O_ERR_EXTERNAL: return "external";
    case P2O_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case P2O_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void p2o_string_free(char* s) { std::free(s); }

p2o_status p2o_config_default(p2o_config** out) {
  P2O_REQUIRE(out);
  return guarded([&] { *out = new p2o_config{json::object(), p2o::RunConfig::desk_default()}; });
}

p2o_status p2o_config_from_json(const char* text, p2o_config** out) {
  P2O_REQUIRE(text && out);
  return guarded([&] {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw p2o::ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    p2o::RunConfig cfg = p2o::run_config_from_json(doc);
    *out = new p2o_config{std::move(doc), std::move(cfg)};
  });
}

p2o_status p2o_config_from_file(const char* path, p2o_config** out) {
  P2O_REQUIRE(path && out);
  std::ifstream in(path);
  if (!in) return fail(P2O_ERR_IO, std::string("cannot open config file: ") + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return p2o_config_from_json(ss.str().c_str(), out);
}

p2o_status p2o_config_set(p2o_config* cfg, const char* key, const char* json_value) {
  P2O_REQUIRE(cfg && key && json_value);
  return guarded([&] {
    json value;
    try {
      value = json::parse(json_value);
    } catch (const json::parse_error&) {
      value = std::string(json_value);  // bare strings such as --set mode=p2o
    }
    json doc = cfg->doc;
    p2o::set_config_value(doc, key, value);
    p2o::RunConfig parsed = p2o::run_config_from_json(doc);
    cfg->doc = std::move(doc);
    cfg->cfg = std::move(parsed);
  });
}

p2o_status p2o_config_to_json(const p2o_config* cfg, char** out) {
  P2O_REQUIRE(cfg && out);
  return guarded([&] { *out = dup_string(p2o::to_json(cfg->cfg).dump(2)); });
}

void p2o_config_free(p2o_config* cfg) { delete cfg; }

p2o_status p2o_train(const p2o_config* cfg, const char* out_dir, const char* run_id, int binary_checkpoints,
                     p2o_run** out) {
  P2O_REQUIRE(cfg && out);
  return guarded([&] {
    p2o::RunOutput output;
    if (out_dir) output.out_dir = out_dir;
    if (run_id) output.run_id = run_id;
    output.checkpoint_format = binary_checkpoints ? p2o::CheckpointFormat::binary : p2o::CheckpointFormat::text;
    auto run = std::make_unique<p2o_run>();
    run->result = p2o::run_p2o(cfg->cfg, output);
    run->mode = p2o::to_string(cfg->cfg.mode);
    run->seed = cfg->cfg.seed;
    run->run_id = output.run_id.empty() ? run->mode + "-seed" + std::to_string(run->seed) : output.run_id;
    *out = run.release();
  });
}

p2o_status p2o_run_epoch_count(const p2o_run* run, int* out) {
  P2O_REQUIRE(run && out);
  *out = static_cast<int>(run->result.epochs.size());
  return P2O_OK;
}

p2o_status p2o_run_metrics_json(const p2o_run* run, char** out) {
  P2O_REQUIRE(run && out);
  return guarded([&] {
    json arr = json::array();
    for (const p2o::EpochMetrics& m : run->result.epochs)
      arr.push_back(p2o::to_json(p2o::MetricsRecord{run->run_id, run->mode, run->seed, m}));
    *out = dup_string(arr.dump());
  });
}

p2o_status p2o_run_final_policy(const p2o_run* run, p2o_policy** out) {
  P2O_REQUIRE(run && out);
  return guarded([&] { *out = new p2o_policy{run->result.final_params}; });
}

void p2o_run_free(p2o_run* run) { delete run; }

p2o_status p2o_policy_load(const char* path, p2o_policy** out) {
  P2O_REQUIRE(path && out);
  return guarded([&] { *out = new p2o_policy{p2o::load_checkpoint(path)}; });
}

p2o_status p2o_policy_save(const p2o_policy* policy, const char* path, int binary) {
  P2O_REQUIRE(policy && path);
  return guarded([&] {
    p2o::save_checkpoint(path, policy->params, binary ? p2o::CheckpointFormat::binary : p2o::CheckpointFormat::text);
  });
}

p2o_status p2o_policy_shape(const p2o_policy* policy, int* vocab_size, int* seq_len, int* feat_dim) {
  P2O_REQUIRE(policy);
  if (vocab_size) *vocab_size = policy->params.vocab_size();
  if (seq_len) *seq_len = policy->params.seq_len();
  if (feat_dim) *feat_dim = policy->params.feat_dim();
  return P2O_OK;
}

void p2o_policy_free(p2o_policy* policy) { delete policy; }

p2o_status p2o_dataset_generate(const p2o_config* cfg, p2o_split split, p2o_dataset** out) {
  P2O_REQUIRE(cfg && out);
  P2O_REQUIRE(split == P2O_SPLIT_TRAIN || split == P2O_SPLIT_HELDOUT);
  return guarded([&] {
    const p2o::Split s = split == P2O_SPLIT_TRAIN ? p2o::Split::train : p2o::Split::heldout;
    *out = new p2o_dataset{p2o::make_dataset(cfg->cfg.env, s)};
  });
}

p2o_status p2o_dataset_load(const char* path, p2o_dataset** out) {
  P2O_REQUIRE(path && out);
  return guarded([&] { *out = new p2o_dataset{p2o::load_dataset(path)}; });
}

p2o_status p2o_dataset_save(const p2o_dataset* data, const char* path) {
  P2O_REQUIRE(data && path);
  return guarded([&] { p2o::save_dataset(path, data->samples); });
}

p2o_status p2o_dataset_size(const p2o_dataset* data, size_t* out) {
  P2O_REQUIRE(data && out);
  *out = data->samples.size();
  return P2O_OK;
}

void p2o_dataset_free(p2o_dataset* data) { delete data; }

p2o_status p2o_evaluate(const p2o_policy* policy, const p2o_dataset* data, int rollouts, double temperature,
                        uint64_t seed, char** out_json) {
  P2O_REQUIRE(policy && data && out_json);
  P2O_REQUIRE(rollouts >= 1);
  return guarded([&] {
    const p2o::PolicyParams& p = policy->params;
    for (const p2o::Sample& s : data->samples) {
      if (static_cast<int>(s.features.size()) != p.feat_dim() || static_cast<int>(s.target.size()) != p.seq_len())
        throw p2o::DataError("dataset shape does not match the policy (sample " + std::to_string(s.id) + ")");
    }
    const p2o::Accuracy acc = p2o::evaluate_accuracy(p, data->samples, rollouts, temperature, seed);
    json j = {{"overall", acc.overall},
              {"planted_hard", acc.planted_hard ? json(*acc.planted_hard) : json(nullptr)},
              {"easy", acc.easy ? json(*acc.easy) : json(nullptr)},
              {"n", data->samples.size()}};
    *out_json = dup_string(j.dump());
  });
}

p2o_status p2o_report(const char* const* metrics_files, size_t n_files, char** epoch_csv, char** table_csv) {
  P2O_REQUIRE(metrics_files && epoch_csv && table_csv);
  return guarded([&] {
    std::vector<std::string> files;
    for (size_t i = 0; i < n_files; ++i) {
      if (!metrics_files[i]) throw p2o::ConfigError("null metrics file path");
      files.emplace_back(metrics_files[i]);
    }
    const p2o::Report r = p2o::report(files);
    char* a = dup_string(r.epoch_csv);
    try {
      *table_csv = dup_string(r.table_csv);
    } catch (...) {
      std::free(a);
      throw;
    }
    *epoch_csv = a;
  });
}

p2o_status p2o_inspect_templates(const char* run_dir, int epoch, char** out) {
  P2O_REQUIRE(run_dir && out);
  return guarded([&] { *out = dup_string(p2o::inspect_templates(run_dir, epoch)); });
}

}  // extern "C"
