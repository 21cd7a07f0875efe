// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "p2o/p2o.h"

namespace {

struct Failure {
  p2o_status status;
  std::string message;
};

void check(p2o_status s) {
  if (s != P2O_OK) throw Failure{s, p2o_last_error()};
}

// Owns a string returned by the C API.
struct CString {
  char* p = nullptr;
  ~CString() { p2o_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out || !(out << text)) {
    throw Failure{P2O_ERR_IO, "cannot write " + path};
  }
}

p2o_config* load_config(const std::string& path) {
  p2o_config* cfg = nullptr;
  check(path.empty() ? p2o_config_default(&cfg) : p2o_config_from_file(path.c_str(), &cfg));
  return cfg;
}

void apply_set(p2o_config* cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Failure{P2O_ERR_INVALID_ARGUMENT, "--set expects key=value, got '" + kv + "'"};
  }
  check(p2o_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"P2O desk-scale lab: GRPO with context distillation and GEPA template search"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run the training loop and write metrics, events and checkpoints");
  std::string train_config, train_out, train_mode, run_id;
  std::vector<std::string> sets;
  long long train_seed = -1;
  int train_threads = 0;
  bool binary_ckpt = false;
  train->add_option("-c,--config", train_config, "JSON config file (unknown keys are rejected)");
  train->add_option("-o,--out", train_out, "output directory")->required();
  train->add_option("-m,--mode", train_mode, "p2o | grpo_only | no_distill | same_template_in_group");
  train->add_option("-s,--seed", train_seed, "run seed (also the env seed unless env.seed is set)");
  train->add_option("--threads", train_threads, "rollout and GEPA worker threads");
  train->add_option("--run-id", run_id, "run id written into metrics records");
  train->add_option("--set", sets, "override a config value, e.g. --set group.K=8")->take_all();
  train->add_flag("--binary-checkpoints", binary_ckpt, "write checkpoints in the binary format");

  // eval
  auto* eval = app.add_subcommand("eval", "template-free accuracy of a checkpoint on a dataset");
  std::string ckpt, dataset_path, eval_config, split = "heldout", dump_path;
  int rollouts = 6;
  double temperature = 0.6;
  unsigned long long eval_seed = 0;
  eval->add_option("-k,--checkpoint", ckpt, "policy checkpoint")->required()->check(CLI::ExistingFile);
  auto* ds_opt = eval->add_option("-d,--dataset", dataset_path, "dataset JSONL file")->check(CLI::ExistingFile);
  eval->add_option("-c,--config", eval_config, "config used to generate the dataset")->excludes(ds_opt);
  eval->add_option("--split", split, "generated split")->check(CLI::IsMember({"train", "heldout"}));
  eval->add_option("--rollouts", rollouts, "rollouts per sample")->check(CLI::PositiveNumber);
  eval->add_option("--temperature", temperature, "sampling temperature (0 = greedy)");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--dump-dataset", dump_path, "also write the evaluated dataset as JSONL");

  // report
  auto* rep = app.add_subcommand("report", "per-epoch CSV and per-seed comparison table from metrics files");
  std::vector<std::string> metrics_files;
  std::string epoch_csv_path, table_csv_path;
  rep->add_option("metrics", metrics_files, "metrics.jsonl files")->required()->check(CLI::ExistingFile);
  rep->add_option("--epochs-csv", epoch_csv_path, "per-epoch CSV output (default stdout)");
  rep->add_option("--table-csv", table_csv_path, "comparison table output (default stdout)");

  // inspect-templates
  auto* insp = app.add_subcommand("inspect-templates", "dump the retained templates and their dev scores");
  std::string run_dir;
  int epoch = -1;
  insp->add_option("run_dir", run_dir, "training output directory")->required()->check(CLI::ExistingDirectory);
  insp->add_option("--epoch", epoch, "epoch to show (default: last)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      p2o_config* cfg = load_config(train_config);
      std::unique_ptr<p2o_config, decltype(&p2o_config_free)> cfg_guard(cfg, p2o_config_free);
      if (!train_mode.empty()) check(p2o_config_set(cfg, "mode", ("\"" + train_mode + "\"").c_str()));
      if (train_seed >= 0) check(p2o_config_set(cfg, "seed", std::to_string(train_seed).c_str()));
      if (train_threads > 0) {
        check(p2o_config_set(cfg, "threads", std::to_string(train_threads).c_str()));
        check(p2o_config_set(cfg, "gepa.threads", std::to_string(train_threads).c_str()));
      }
      for (const std::string& kv : sets) apply_set(cfg, kv);
      p2o_run* run = nullptr;
      check(p2o_train(cfg, train_out.c_str(), run_id.empty() ? nullptr : run_id.c_str(), binary_ckpt, &run));
      std::unique_ptr<p2o_run, decltype(&p2o_run_free)> run_guard(run, p2o_run_free);
      int n = 0;
      check(p2o_run_epoch_count(run, &n));
      std::cout << "wrote " << n << " epochs to " << train_out << '\n';
    } else if (*eval) {
      p2o_policy* policy = nullptr;
      check(p2o_policy_load(ckpt.c_str(), &policy));
      std::unique_ptr<p2o_policy, decltype(&p2o_policy_free)> pg(policy, p2o_policy_free);
      p2o_dataset* data = nullptr;
      if (!dataset_path.empty()) {
        check(p2o_dataset_load(dataset_path.c_str(), &data));
      } else {
        p2o_config* cfg = load_config(eval_config);
        std::unique_ptr<p2o_config, decltype(&p2o_config_free)> cg(cfg, p2o_config_free);
        check(p2o_dataset_generate(cfg, split == "train" ? P2O_SPLIT_TRAIN : P2O_SPLIT_HELDOUT, &data));
      }
      std::unique_ptr<p2o_dataset, decltype(&p2o_dataset_free)> dg(data, p2o_dataset_free);
      if (!dump_path.empty()) check(p2o_dataset_save(data, dump_path.c_str()));
      CString result;
      check(p2o_evaluate(policy, data, rollouts, temperature, eval_seed, &result.p));
      std::cout << result.str() << '\n';
    } else if (*rep) {
      std::vector<const char*> files;
      for (const std::string& f : metrics_files) files.push_back(f.c_str());
      CString epochs, table;
      check(p2o_report(files.data(), files.size(), &epochs.p, &table.p));
      write_or_print(epoch_csv_path, epochs.str());
      if (epoch_csv_path.empty() && table_csv_path.empty()) std::cout << '\n';
      write_or_print(table_csv_path, table.str());
    } else if (*insp) {
      CString text;
      check(p2o_inspect_templates(run_dir.c_str(), epoch, &text.p));
      std::cout << text.str();
    }
  } catch (const Failure& f) {
    std::cerr << "error (" << p2o_status_name(f.status) << "): " << f.message << '\n';
    return static_cast<int>(f.status) >= 100 ? 2 : 1;
  }
  return 0;
}
