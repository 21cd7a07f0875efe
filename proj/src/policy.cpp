#include "p2o/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "p2o/error.hpp"

namespace p2o {

namespace {

constexpr char kTextMagic[] = "p2o-policy-text";
constexpr char kBinaryMagic[8] = {'P', '2', 'O', 'P', 'O', 'L', '1', '\0'};

void check_features(const PolicyParams& params, std::span<const double> features) {
  if (static_cast<int>(features.size()) != params.feat_dim())
    throw ContractError("policy: feature dimension " + std::to_string(features.size()) + " != " +
                        std::to_string(params.feat_dim()));
}

void check_tokens(const PolicyParams& params, std::span<const int> tokens) {
  if (static_cast<int>(tokens.size()) != params.seq_len())
    throw ContractError("policy: trajectory length mismatch");
  for (int t : tokens)
    if (t < 0 || t >= params.vocab_size()) throw ContractError("policy: token out of range");
}

// Stable log-sum-exp of the logits scaled by 1/temperature.
double log_normalizer(const Vector& logits, double inv_temp) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z * inv_temp);
  double s = 0.0;
  for (double z : logits) s += std::exp(z * inv_temp - mx);
  return mx + std::log(s);
}

std::size_t argmax(const Vector& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

PolicyParams::PolicyParams(int vocab_size, int seq_len, int feat_dim)
    : vocab_(vocab_size), seq_len_(seq_len), dim_(feat_dim) {
  if (vocab_size < 1 || seq_len < 1 || feat_dim < 1) throw ConfigError("PolicyParams: invalid shape");
  weights_.assign(static_cast<std::size_t>(vocab_size * seq_len * feat_dim), 0.0);
  bias_.assign(static_cast<std::size_t>(vocab_size * seq_len), 0.0);
}

void PolicyParams::axpy(double a, const PolicyParams& x) {
  if (!same_shape(x)) throw ContractError("PolicyParams::axpy: shape mismatch");
  for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] += a * x.weights_[i];
  for (std::size_t i = 0; i < bias_.size(); ++i) bias_[i] += a * x.bias_[i];
}

bool PolicyParams::all_finite() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(weights_.begin(), weights_.end(), finite) && std::all_of(bias_.begin(), bias_.end(), finite);
}

Vector position_logits(const PolicyParams& params, int pos, std::span<const double> features) {
  check_features(params, features);
  const int dim = params.feat_dim();
  Vector z(static_cast<std::size_t>(params.vocab_size()));
  for (int v = 0; v < params.vocab_size(); ++v) {
    const std::span<const double> row = params.weight_row(pos, v);
    double s = params.bias(pos, v);
    for (int k = 0; k < dim; ++k) s += row[k] * features[k];
    z[v] = s;
  }
  return z;
}

Trajectory sample_trajectory(const PolicyParams& params, std::span<const double> features, double temperature,
                             Rng& rng) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw ContractError("sample_trajectory: temperature must be finite and >= 0");
  Trajectory y;
  y.tokens.resize(static_cast<std::size_t>(params.seq_len()));
  y.gen_features.assign(features.begin(), features.end());
  const bool greedy = temperature == 0.0;
  const double inv_temp = greedy ? 1.0 : 1.0 / temperature;
  double lp = 0.0;
  for (int l = 0; l < params.seq_len(); ++l) {
    const Vector z = position_logits(params, l, features);
    for (double v : z)
      if (!std::isfinite(v)) throw NumericalError("sample_trajectory: non-finite logit at position " + std::to_string(l));
    if (greedy) {
      y.tokens[l] = static_cast<int>(argmax(z));
      continue;
    }
    const double lz = log_normalizer(z, inv_temp);
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = params.vocab_size() - 1;
    for (int v = 0; v < params.vocab_size(); ++v) {
      acc += std::exp(z[v] * inv_temp - lz);
      if (u < acc) {
        pick = v;
        break;
      }
    }
    y.tokens[l] = pick;
    lp += z[pick] * inv_temp - lz;
  }
  y.gen_log_prob = greedy ? 0.0 : lp;
  return y;
}

double sampling_log_prob(const PolicyParams& params, std::span<const double> features, std::span<const int> tokens,
                         double temperature) {
  check_tokens(params, tokens);
  if (temperature == 0.0) {
    for (int l = 0; l < params.seq_len(); ++l)
      if (static_cast<int>(argmax(position_logits(params, l, features))) != tokens[l])
        return -std::numeric_limits<double>::infinity();
    return 0.0;
  }
  const double inv_temp = 1.0 / temperature;
  double lp = 0.0;
  for (int l = 0; l < params.seq_len(); ++l) {
    const Vector z = position_logits(params, l, features);
    lp += z[tokens[l]] * inv_temp - log_normalizer(z, inv_temp);
  }
  return lp;
}

double log_prob(const PolicyParams& params, std::span<const double> features, std::span<const int> tokens) {
  return sampling_log_prob(params, features, tokens, 1.0);
}

void add_grad_log_prob(const PolicyParams& params, std::span<const double> features, std::span<const int> tokens,
                       double scale, PolicyParams& out) {
  check_tokens(params, tokens);
  if (!out.same_shape(params)) throw ContractError("add_grad_log_prob: output shape mismatch");
  const int dim = params.feat_dim();
  for (int l = 0; l < params.seq_len(); ++l) {
    const Vector z = position_logits(params, l, features);
    const double lz = log_normalizer(z, 1.0);
    for (int v = 0; v < params.vocab_size(); ++v) {
      const double g = ((v == tokens[l]) ? 1.0 : 0.0) - std::exp(z[v] - lz);
      if (g == 0.0) continue;
      const double sg = scale * g;
      out.bias(l, v) += sg;
      for (int k = 0; k < dim; ++k) out.weight(l, v, k) += sg * features[k];
    }
  }
}

PolicyParams grad_log_prob(const PolicyParams& params, std::span<const double> features,
                           std::span<const int> tokens) {
  PolicyParams g(params.vocab_size(), params.seq_len(), params.feat_dim());
  add_grad_log_prob(params, features, tokens, 1.0, g);
  return g;
}

void save_checkpoint(const std::string& path, const PolicyParams& params, CheckpointFormat format) {
  if (format == CheckpointFormat::text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << kTextMagic << ' ' << params.vocab_size() << ' ' << params.seq_len() << ' ' << params.feat_dim() << '\n';
    char buf[40];
    const auto write_block = [&](const std::vector<double>& values, int per_line) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", values[i]);
        out << buf << (((i + 1) % per_line == 0) ? '\n' : ' ');
      }
    };
    write_block(params.weights(), params.feat_dim());
    write_block(params.biases(), params.vocab_size());
    if (!out) throw IoError("failed writing checkpoint: " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  static_assert(std::endian::native == std::endian::little, "binary checkpoints assume a little-endian host");
  out.write(kBinaryMagic, sizeof kBinaryMagic);
  const std::int32_t shape[3] = {params.vocab_size(), params.seq_len(), params.feat_dim()};
  out.write(reinterpret_cast<const char*>(shape), sizeof shape);
  out.write(reinterpret_cast<const char*>(params.weights().data()),
            static_cast<std::streamsize>(params.weights().size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(params.biases().data()),
            static_cast<std::streamsize>(params.biases().size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof kBinaryMagic] = {};
  in.read(magic, sizeof magic);
  if (in && std::memcmp(magic, kBinaryMagic, sizeof magic) == 0) {
    std::int32_t shape[3];
    in.read(reinterpret_cast<char*>(shape), sizeof shape);
    if (!in) throw ParseError("truncated checkpoint header: " + path);
    PolicyParams p(shape[0], shape[1], shape[2]);
    in.read(reinterpret_cast<char*>(p.weights().data()),
            static_cast<std::streamsize>(p.weights().size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(p.biases().data()), static_cast<std::streamsize>(p.biases().size() * sizeof(double)));
    if (!in) throw ParseError("truncated checkpoint body: " + path);
    return p;
  }
  in.clear();
  in.seekg(0);
  std::string tag;
  int vocab = 0, seq_len = 0, dim = 0;
  in >> tag >> vocab >> seq_len >> dim;
  if (!in || tag != kTextMagic) throw ParseError("not a policy checkpoint: " + path);
  PolicyParams p(vocab, seq_len, dim);
  std::string tok;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(in >> tok)) throw ParseError("truncated checkpoint: " + path);
    char* end = nullptr;
    p.at(i) = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw ParseError("bad number in checkpoint: " + tok);
  }
  return p;
}

}  // namespace p2o
