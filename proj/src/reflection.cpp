#include "p2o/reflection.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <limits>

#include <httplib.h>
#include <json.hpp>

#include "p2o/error.hpp"

namespace p2o {

namespace {

// Per-position logit table: L rows of V entries.
using LogitTable = std::vector<Vector>;

double margin_sum(const std::vector<LogitTable>& base, const LogitTable& shift, const FeedbackBundle& feedback) {
  double total = 0.0;
  for (std::size_t f = 0; f < base.size(); ++f) {
    const Tokens& target = feedback.items[f].target;
    for (std::size_t l = 0; l < base[f].size(); ++l) {
      const int t = target[l];
      double best_other = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < base[f][l].size(); ++v)
        if (static_cast<int>(v) != t) best_other = std::max(best_other, base[f][l][v] + shift[l][v]);
      total += base[f][l][t] + shift[l][t] - best_other;
    }
  }
  return total;
}

LogitTable weight_response(const PolicyParams& params, const Vector& x) {
  LogitTable out(static_cast<std::size_t>(params.seq_len()), Vector(static_cast<std::size_t>(params.vocab_size()), 0.0));
  for (int l = 0; l < params.seq_len(); ++l)
    for (int v = 0; v < params.vocab_size(); ++v) {
      const std::span<const double> row = params.weight_row(l, v);
      double s = 0.0;
      for (int k = 0; k < params.feat_dim(); ++k) s += row[k] * x[k];
      out[l][v] = s;
    }
  return out;
}

void accumulate(LogitTable& acc, const LogitTable& add, double sign) {
  for (std::size_t l = 0; l < acc.size(); ++l)
    for (std::size_t v = 0; v < acc[l].size(); ++v) acc[l][v] += sign * add[l][v];
}

}  // namespace

FeedbackGuidedReflector::FeedbackGuidedReflector(const PolicyParams& scorer, const TemplateSpace& space,
                                                 int max_steps)
    : scorer_(scorer), space_(space), max_steps_(max_steps) {
  if (space.feat_dim() != scorer.feat_dim()) throw ConfigError("FeedbackGuidedReflector: dimension mismatch");
  if (max_steps < 1) throw ConfigError("FeedbackGuidedReflector: max_steps must be >= 1");
}

double FeedbackGuidedReflector::summed_margin(const Tokens& genome, const FeedbackBundle& feedback) const {
  const Template z = space_.make(genome);
  double total = 0.0;
  for (const FeedbackItem& item : feedback.items) {
    Vector x = item.features;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += z.embedding()[k];
    for (int l = 0; l < scorer_.seq_len(); ++l) {
      const Vector z_l = position_logits(scorer_, l, x);
      double best_other = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < scorer_.vocab_size(); ++v)
        if (v != item.target[l]) best_other = std::max(best_other, z_l[v]);
      total += z_l[item.target[l]] - best_other;
    }
  }
  return total;
}

Template FeedbackGuidedReflector::propose(const Template& parent, const FeedbackBundle& feedback, Rng&) const {
  if (feedback.empty()) return parent;
  const int m = space_.length();
  const int G = space_.alphabet();
  Tokens genome = parent.genome() ? *parent.genome() : Tokens(static_cast<std::size_t>(m), 0);

  std::vector<LogitTable> base;
  for (const FeedbackItem& item : feedback.items) {
    if (static_cast<int>(item.target.size()) != scorer_.seq_len())
      throw ContractError("FeedbackGuidedReflector: feedback target length mismatch");
    LogitTable t;
    for (int l = 0; l < scorer_.seq_len(); ++l) t.push_back(position_logits(scorer_, l, item.features));
    base.push_back(std::move(t));
  }
  std::vector<LogitTable> response(static_cast<std::size_t>(m * G));
  for (int p = 0; p < m; ++p)
    for (int s = 0; s < G; ++s) response[p * G + s] = weight_response(scorer_, space_.vector_at(p, s));

  LogitTable shift(static_cast<std::size_t>(scorer_.seq_len()),
                   Vector(static_cast<std::size_t>(scorer_.vocab_size()), 0.0));
  for (int p = 0; p < m; ++p) accumulate(shift, response[p * G + genome[p]], 1.0);
  double current = margin_sum(base, shift, feedback);

  for (int step = 0; step < max_steps_; ++step) {
    int best_p = -1, best_s = -1;
    double best = current;
    for (int p = 0; p < m; ++p) {
      for (int s = 0; s < G; ++s) {
        if (s == genome[p]) continue;
        LogitTable trial = shift;
        accumulate(trial, response[p * G + genome[p]], -1.0);
        accumulate(trial, response[p * G + s], 1.0);
        const double value = margin_sum(base, trial, feedback);
        if (value > best + 1e-12) {
          best = value;
          best_p = p;
          best_s = s;
        }
      }
    }
    if (best_p < 0) break;
    accumulate(shift, response[best_p * G + genome[best_p]], -1.0);
    accumulate(shift, response[best_p * G + best_s], 1.0);
    genome[best_p] = best_s;
    current = best;
  }
  return space_.make(genome);
}

Template RandomMutationReflector::propose(const Template& parent, const FeedbackBundle&, Rng& rng) const {
  const int m = space_.length();
  const int G = space_.alphabet();
  Tokens genome = parent.genome() ? *parent.genome() : Tokens(static_cast<std::size_t>(m), 0);
  const int p = static_cast<int>(rng.below(static_cast<std::size_t>(m)));
  int s = static_cast<int>(rng.below(static_cast<std::size_t>(G - 1)));
  if (s >= genome[p]) ++s;
  genome[p] = s;
  return space_.make(genome);
}

std::string encode_reflection_request(const Template& parent, const FeedbackBundle& feedback) {
  nlohmann::json j;
  if (parent.is_empty())
    j["template"] = "empty";
  else
    j["template"] = *parent.genome();
  nlohmann::json items = nlohmann::json::array();
  for (const FeedbackItem& f : feedback.items)
    items.push_back({{"features", f.features}, {"prediction", f.prediction}, {"target", f.target}});
  j["feedback"] = std::move(items);
  return j.dump();
}

Template decode_reflection_response(const std::string& line, const TemplateSpace& space) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("reflection response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("template")) throw ParseError("reflection response lacks a template field");
  const nlohmann::json& t = j["template"];
  if (t.is_string() && t.get<std::string>() == "empty") return space.empty();
  if (!t.is_array()) throw ParseError("reflection response template must be an integer list or \"empty\"");
  Tokens genome;
  for (const nlohmann::json& v : t) {
    if (!v.is_number_integer()) throw ParseError("reflection response genome entries must be integers");
    genome.push_back(v.get<int>());
  }
  try {
    return space.make(genome);
  } catch (const ContractError& e) {
    throw ParseError(std::string("reflection response genome invalid: ") + e.what());
  }
}

ExternalReflector::ExternalReflector(ExternalReflectorConfig cfg, const TemplateSpace& space)
    : cfg_(std::move(cfg)), space_(space) {
  if (cfg_.command.empty() == cfg_.url.empty())
    throw ConfigError("external reflector: set exactly one of command or url");
  if (cfg_.timeout_ms < 1) throw ConfigError("external reflector: timeout_ms must be positive");
  // A subprocess that exits before reading its request must not kill us.
  ::signal(SIGPIPE, SIG_IGN);
}

Template ExternalReflector::propose(const Template& parent, const FeedbackBundle& feedback, Rng&) const {
  const std::string request = encode_reflection_request(parent, feedback);
  const std::string response = cfg_.command.empty() ? exchange_http(request) : exchange_subprocess(request);
  return decode_reflection_response(response, space_);
}

std::string ExternalReflector::exchange_subprocess(const std::string& request) const {
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0) throw ExternalError("reflector: pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw ExternalError("reflector: pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw ExternalError("reflector: fork failed");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    ::execl("/bin/sh", "sh", "-c", cfg_.command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(to_child[0]);
  ::close(from_child[1]);

  const std::string line = request + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(to_child[1], line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  ::close(to_child[1]);

  std::string out;
  bool timed_out = false;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
  char buf[4096];
  while (out.find('\n') == std::string::npos) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{from_child[0], POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) {
      timed_out = true;
      break;
    }
    const ssize_t n = ::read(from_child[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  ::close(from_child[0]);
  int status = 0;
  if (::waitpid(pid, &status, WNOHANG) == 0) {
    ::kill(-pid, SIGKILL);  // the whole group, so grandchildren do not outlive us
    ::waitpid(pid, &status, 0);
  }
  if (timed_out) throw ExternalError("reflector subprocess timed out after " + std::to_string(cfg_.timeout_ms) + " ms");
  const std::size_t nl = out.find('\n');
  if (nl != std::string::npos) out.resize(nl);
  if (out.empty()) throw ExternalError("reflector subprocess produced no response");
  return out;
}

std::string ExternalReflector::exchange_http(const std::string& request) const {
  httplib::Client client(cfg_.url);
  const auto sec = cfg_.timeout_ms / 1000;
  const auto usec = (cfg_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  const auto res = client.Post(cfg_.path, request, "application/json");
  if (!res) throw ExternalError("reflector HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw ExternalError("reflector HTTP status " + std::to_string(res->status));
  std::string body = res->body;
  const std::size_t nl = body.find('\n');
  if (nl != std::string::npos) body.resize(nl);
  return body;
}

}  // namespace p2o
