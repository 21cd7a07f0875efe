#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "p2o/error.hpp"
#include "p2o/harness.hpp"

namespace p2o {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<MetricsRecord> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(metrics_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Report report(std::span<const std::string> metrics_files) {
  if (metrics_files.empty()) throw ConfigError("report needs at least one metrics file");

  std::ostringstream epochs;
  epochs << "run_id,mode,seed,epoch,mean_train_reward,hard_count,val_accuracy,hard_subset_accuracy,"
            "pass_at_1,pass_at_K,pass_at_1_templated,pass_at_K_templated,gepa_budget_used,wall_time\n";

  // mode -> seed -> final record of that run
  std::map<std::string, std::map<std::uint64_t, EpochMetrics>> finals;
  for (const std::string& path : metrics_files) {
    const std::vector<MetricsRecord> records = read_metrics_file(path);
    for (const MetricsRecord& r : records) {
      const EpochMetrics& m = r.metrics;
      epochs << r.run_id << ',' << r.mode << ',' << r.seed << ',' << m.epoch << ',' << fmt(m.mean_train_reward)
             << ',' << m.hard_count << ',' << fmt(m.val_accuracy) << ',' << fmt(m.hard_subset_accuracy) << ','
             << fmt(m.pass_at_1) << ',' << fmt(m.pass_at_K) << ',' << fmt(m.pass_at_1_templated) << ','
             << fmt(m.pass_at_K_templated) << ',' << m.gepa_budget_used << ',' << fmt(m.wall_time) << '\n';
      auto& slot = finals[r.mode];
      auto it = slot.find(r.seed);
      if (it == slot.end() || m.epoch >= it->second.epoch) slot[r.seed] = m;
    }
  }

  std::ostringstream table;
  table << "mode,seed,final_hard_subset_accuracy,final_val_accuracy\n";
  for (const auto& [mode, by_seed] : finals) {
    std::vector<double> hard, val;
    for (const auto& [seed, m] : by_seed) {
      table << mode << ',' << seed << ',' << fmt(m.hard_subset_accuracy) << ',' << fmt(m.val_accuracy) << '\n';
      hard.push_back(m.hard_subset_accuracy);
      val.push_back(m.val_accuracy);
    }
    table << mode << ",median," << fmt(median(hard)) << ',' << fmt(median(val)) << '\n';
  }
  return {epochs.str(), table.str()};
}

std::string inspect_templates(const std::string& run_dir, int epoch) {
  const std::string path = run_dir + "/templates.jsonl";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::optional<nlohmann::json> chosen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (epoch < 0 || j.at("epoch").get<int>() == epoch) chosen = std::move(j);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!chosen) {
    if (epoch < 0) throw DataError(path + ": no template records (GEPA never ran)");
    throw DataError(path + ": no record for epoch " + std::to_string(epoch));
  }
  const nlohmann::json& r = *chosen;
  std::ostringstream out;
  try {
    out << "epoch " << r.at("epoch").get<int>() << ": pool " << r.at("pool_size").get<int>() << ", dev "
        << r.at("dev_ids").size() << ", covered " << r.at("covered").size();
    if (r.at("empty_fallback").get<bool>()) out << " (empty-template fallback)";
    out << '\n';
    for (const nlohmann::json& t : r.at("covered")) {
      out << "  z" << t.at("id").get<int>() << "  genome=";
      const nlohmann::json& g = t.at("genome");
      if (g.is_string()) {
        out << "empty";
      } else {
        out << '[';
        for (std::size_t i = 0; i < g.size(); ++i) out << (i ? "," : "") << g[i].get<int>();
        out << ']';
      }
      out << "  mean=" << fmt(t.at("mean_score").get<double>()) << "  scores=";
      for (const nlohmann::json& s : t.at("dev_scores")) out << s.get<int>();
      out << '\n';
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed record: " + e.what());
  }
  return out.str();
}

}  // namespace p2o
