#include "p2o/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "p2o/error.hpp"
#include "p2o/rng.hpp"

namespace p2o {

namespace {

thread_local std::uint64_t g_nonempty_insertions = 0;

// Stream tags for the world and per-split sample draws.
enum : std::uint64_t {
  kTagBasis = 0x11,
  kTagHardMix = 0x12,
  kTagOffsets = 0x13,
  kTagPrototypes = 0x14,
  kTagPhases = 0x15,
  kTagTemplates = 0x16,
  kTagSamples = 0x20,
};

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

// Orthonormal basis from Gaussian vectors by modified Gram-Schmidt.
std::vector<Vector> random_orthonormal(int n, Rng& rng) {
  std::vector<Vector> basis;
  while (static_cast<int>(basis.size()) < n) {
    Vector v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.normal();
    for (const Vector& b : basis) {
      const double p = dot(v, b);
      for (int i = 0; i < n; ++i) v[i] -= p * b[i];
    }
    const double len = norm(v);
    if (len < 1e-8) continue;
    for (double& x : v) x /= len;
    basis.push_back(std::move(v));
  }
  return basis;
}

struct World {
  int vocab = 0;
  int seq_len = 0;
  int dim = 0;
  std::vector<Vector> easy_axes;  // two axes per position
  std::vector<Vector> hard_axes;  // two axes per position, nuisance half
  std::vector<double> hard_phase; // codeword rotation per position for the hard map
  std::vector<Vector> offsets;    // one per hard cluster
  std::vector<Tokens> prototypes; // one per hard cluster

  explicit World(const EnvConfig& cfg) : vocab(cfg.vocab_size), seq_len(cfg.seq_len), dim(cfg.feat_dim) {
    const int signal_dim = dim / 2;
    const int nuisance_dim = dim - signal_dim;

    Rng basis_rng(cfg.seed, {kTagBasis});
    const std::vector<Vector> basis = random_orthonormal(dim, basis_rng);
    std::vector<Vector> signal(basis.begin(), basis.begin() + signal_dim);
    std::vector<Vector> nuisance(basis.begin() + signal_dim, basis.end());

    // Second map: a seeded rotation inside the nuisance half.
    Rng mix_rng(cfg.seed, {kTagHardMix});
    const std::vector<Vector> mix = random_orthonormal(nuisance_dim, mix_rng);
    std::vector<Vector> mixed(static_cast<std::size_t>(nuisance_dim), Vector(static_cast<std::size_t>(dim), 0.0));
    for (int i = 0; i < nuisance_dim; ++i)
      for (int j = 0; j < nuisance_dim; ++j)
        for (int k = 0; k < dim; ++k) mixed[i][k] += mix[i][j] * nuisance[j][k];

    const auto place = [&](const std::vector<Vector>& half, std::vector<Vector>& axes) {
      const int planes = std::max(1, static_cast<int>(half.size()) / 2);
      for (int l = 0; l < seq_len; ++l) {
        const int p = l % planes;
        axes.push_back(half[static_cast<std::size_t>(2 * p) % half.size()]);
        axes.push_back(half[static_cast<std::size_t>(2 * p + 1) % half.size()]);
      }
    };
    place(signal, easy_axes);
    place(mixed, hard_axes);

    Rng phase_rng(cfg.seed, {kTagPhases});
    for (int l = 0; l < seq_len; ++l) hard_phase.push_back(2.0 * std::numbers::pi * phase_rng.uniform());

    const int clusters = cfg.n_hard > 0 ? cfg.n_hard_clusters : 0;
    Rng offset_rng(cfg.seed, {kTagOffsets});
    const double offset_norm = cfg.hard_offset_scale * std::sqrt(static_cast<double>(seq_len));
    for (int c = 0; c < clusters; ++c) {
      Vector u(static_cast<std::size_t>(nuisance_dim));
      for (double& x : u) x = offset_rng.normal();
      const double len = norm(u);
      Vector o(static_cast<std::size_t>(dim), 0.0);
      for (int j = 0; j < nuisance_dim; ++j)
        for (int k = 0; k < dim; ++k) o[k] += offset_norm * u[j] / len * nuisance[j][k];
      offsets.push_back(std::move(o));
    }

    Rng proto_rng(cfg.seed, {kTagPrototypes});
    for (int c = 0; c < clusters; ++c) {
      Tokens t(static_cast<std::size_t>(seq_len));
      for (int& v : t) v = static_cast<int>(proto_rng.below(static_cast<std::size_t>(vocab)));
      prototypes.push_back(std::move(t));
    }
  }

  Vector encode(const Tokens& target, const std::vector<Vector>& axes, bool hard) const {
    Vector phi(static_cast<std::size_t>(dim), 0.0);
    for (int l = 0; l < seq_len; ++l) {
      double angle = 2.0 * std::numbers::pi * target[l] / vocab;
      if (hard) angle += hard_phase[l];
      const double ca = std::cos(angle);
      const double sa = std::sin(angle);
      const Vector& a = axes[2 * l];
      const Vector& b = axes[2 * l + 1];
      for (int k = 0; k < dim; ++k) phi[k] += ca * a[k] + sa * b[k];
    }
    return phi;
  }
};

void add_noise(Vector& phi, double relative_scale, Rng& rng) {
  if (relative_scale <= 0.0) return;
  const double n = norm(phi);
  const double sigma = relative_scale * n / std::sqrt(static_cast<double>(phi.size()));
  for (double& x : phi) x += sigma * rng.normal();
}

}  // namespace

void EnvConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("env: vocab_size must be >= 2");
  if (seq_len < 1) throw ConfigError("env: seq_len must be >= 1");
  if (feat_dim < 4) throw ConfigError("env: feat_dim must be >= 4");
  if (n_easy < 0 || n_hard < 0) throw ConfigError("env: sample counts must be nonnegative");
  if (n_hard > 0 && (n_hard_clusters < 1 || n_hard_clusters > n_hard))
    throw ConfigError("env: n_hard_clusters must be in [1, n_hard]");
  if (template_len < 1) throw ConfigError("env: template_len must be >= 1");
  if (template_alphabet < 2) throw ConfigError("env: template_alphabet must be >= 2");
  if (!(template_scale > 0.0) || !std::isfinite(template_scale)) throw ConfigError("env: template_scale must be positive");
  if (!(hard_offset_scale >= 0.0) || !std::isfinite(hard_offset_scale))
    throw ConfigError("env: hard_offset_scale must be nonnegative");
  if (!(hard_target_jitter >= 0.0 && hard_target_jitter <= 1.0))
    throw ConfigError("env: hard_target_jitter must be in [0, 1]");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ConfigError("env: noise_scale must be nonnegative");
}

TemplateSpace::TemplateSpace(const EnvConfig& cfg)
    : length_(cfg.template_len), alphabet_(cfg.template_alphabet), feat_dim_(cfg.feat_dim) {
  cfg.validate();
  Rng rng(cfg.seed, {kTagTemplates});
  const double sigma = cfg.template_scale / std::sqrt(static_cast<double>(feat_dim_));
  table_.reserve(static_cast<std::size_t>(length_ * alphabet_));
  for (int p = 0; p < length_; ++p) {
    for (int s = 0; s < alphabet_; ++s) {
      Vector v(static_cast<std::size_t>(feat_dim_), 0.0);
      if (s != 0)
        for (double& x : v) x = sigma * rng.normal();
      table_.push_back(std::move(v));
    }
  }
}

TemplateSpace::TemplateSpace(int length, int alphabet, int feat_dim, std::vector<Vector> table)
    : length_(length), alphabet_(alphabet), feat_dim_(feat_dim), table_(std::move(table)) {
  if (length_ < 1 || alphabet_ < 2 || feat_dim_ < 1)
    throw ConfigError("TemplateSpace: invalid shape");
  if (table_.size() != static_cast<std::size_t>(length_ * alphabet_))
    throw ConfigError("TemplateSpace: table size does not match length * alphabet");
  for (const Vector& v : table_) {
    if (v.size() != static_cast<std::size_t>(feat_dim_)) throw ConfigError("TemplateSpace: vector dimension mismatch");
    for (double x : v)
      if (!std::isfinite(x)) throw ConfigError("TemplateSpace: non-finite table entry");
  }
}

const Vector& TemplateSpace::vector_at(int position, int symbol) const {
  return table_[static_cast<std::size_t>(position * alphabet_ + symbol)];
}

Template TemplateSpace::make(const Tokens& genome) const {
  if (static_cast<int>(genome.size()) != length_)
    throw ContractError("template genome has length " + std::to_string(genome.size()) + ", expected " +
                        std::to_string(length_));
  Template t;
  t.embedding_.assign(static_cast<std::size_t>(feat_dim_), 0.0);
  for (int p = 0; p < length_; ++p) {
    const int s = genome[p];
    if (s < 0 || s >= alphabet_) throw ContractError("template genome symbol out of range");
    const Vector& v = vector_at(p, s);
    for (int k = 0; k < feat_dim_; ++k) t.embedding_[k] += v[k];
  }
  t.genome_ = genome;
  return t;
}

std::vector<Sample> make_dataset(const EnvConfig& cfg, Split split) {
  cfg.validate();
  const int total = cfg.n_easy + cfg.n_hard;
  if (total == 0) return {};

  const World world(cfg);
  Rng rng(cfg.seed, {kTagSamples, static_cast<std::uint64_t>(split)});

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < cfg.n_easy; ++i) {
    Sample s;
    s.target.resize(static_cast<std::size_t>(cfg.seq_len));
    for (int& v : s.target) v = static_cast<int>(rng.below(static_cast<std::size_t>(cfg.vocab_size)));
    s.features = world.encode(s.target, world.easy_axes, false);
    add_noise(s.features, cfg.noise_scale, rng);
    samples.push_back(std::move(s));
  }
  for (int i = 0; i < cfg.n_hard; ++i) {
    const int c = i % cfg.n_hard_clusters;
    Sample s;
    s.target = world.prototypes[c];
    for (int& v : s.target)
      if (rng.uniform() < cfg.hard_target_jitter) v = static_cast<int>(rng.below(static_cast<std::size_t>(cfg.vocab_size)));
    s.features = world.encode(s.target, world.hard_axes, true);
    for (int k = 0; k < cfg.feat_dim; ++k) s.features[k] += world.offsets[c][k];
    add_noise(s.features, cfg.noise_scale, rng);
    s.is_planted_hard = true;
    samples.push_back(std::move(s));
  }

  // Interleave easy and hard samples; ids follow the final order.
  for (std::size_t i = samples.size() - 1; i > 0; --i) std::swap(samples[i], samples[rng.below(i + 1)]);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].id = static_cast<int>(i);
  return samples;
}

AugmentedInput insert_template(const Sample& x, const Template& z) {
  AugmentedInput out{x.id, x.features};
  if (z.is_empty()) return out;
  ++g_nonempty_insertions;
  const Vector& e = z.embedding();
  for (std::size_t k = 0; k < out.features.size() && k < e.size(); ++k) out.features[k] += e[k];
  return out;
}

int reward(const Sample& x, std::span<const int> tokens, int vocab_size) {
  if (tokens.size() != x.target.size())
    throw ContractError("reward: trajectory length " + std::to_string(tokens.size()) + " != target length " +
                        std::to_string(x.target.size()));
  for (int t : tokens)
    if (t < 0 || t >= vocab_size) throw ContractError("reward: token out of range");
  return std::equal(tokens.begin(), tokens.end(), x.target.begin()) ? 1 : 0;
}

double chance_success_probability(const EnvConfig& cfg) {
  return std::pow(static_cast<double>(cfg.vocab_size), -static_cast<double>(cfg.seq_len));
}

std::uint64_t nonempty_template_insertions() { return g_nonempty_insertions; }

void save_dataset(const std::string& path, std::span<const Sample> samples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open dataset file for writing: " + path);
  for (const Sample& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["features"] = s.features;
    j["target"] = s.target;
    j["is_planted_hard"] = s.is_planted_hard;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing dataset file: " + path);
}

std::vector<Sample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::vector<Sample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Sample s;
      s.id = j.at("id").get<int>();
      s.features = j.at("features").get<Vector>();
      s.target = j.at("target").get<Tokens>();
      s.is_planted_hard = j.at("is_planted_hard").get<bool>();
      for (double f : s.features)
        if (!std::isfinite(f)) throw DataError("non-finite feature");
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return samples;
}

}  // namespace p2o
