#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2o/types.hpp"

namespace p2o {

// Synthetic verifiable task family. Samples carry an observable feature vector
// and a hidden target sequence; the reward is an exact-match indicator.
//
// Feature space is split into a "signal" half and a "nuisance" half by a seeded
// rotation. Easy samples encode their target in the signal half (one 2-D
// codeword plane per position), which the warm-started policy learns to read.
// Planted-hard samples encode their target in the nuisance half through a
// second seeded map and sit on a large per-cluster offset, so a policy trained
// only on easy data is at chance on them. Targets in a hard cluster are
// perturbations of a shared prototype sequence.
struct EnvConfig {
  int vocab_size = 8;
  int seq_len = 4;
  int feat_dim = 16;
  int n_easy = 0;
  int n_hard = 0;
  int n_hard_clusters = 4;
  std::uint64_t seed = 0;

  int template_len = 8;       // genome length m
  int template_alphabet = 32; // genome alphabet G; symbol 0 is the blank token
  double template_scale = 1.0;
  double hard_offset_scale = 2.0;   // offset norm relative to the codeword norm
  double hard_target_jitter = 0.1;  // per-position resample probability around the prototype
  double noise_scale = 0.05;        // noise norm relative to the clean feature norm

  void validate() const;  // throws ConfigError
};

// Which draw of the same world to generate. The world (maps, offsets,
// prototypes, template table) depends only on EnvConfig::seed.
enum class Split : std::uint64_t { train = 0, heldout = 1, pretrain = 2 };

struct Sample {
  int id = 0;
  Vector features;
  Tokens target;
  bool is_planted_hard = false;  // diagnostic; never read by training code

  bool operator==(const Sample&) const = default;
};

class Template {
 public:
  Template() = default;

  static Template empty(int feat_dim) {
    Template t;
    t.embedding_.assign(static_cast<std::size_t>(feat_dim), 0.0);
    return t;
  }

  bool is_empty() const { return !genome_.has_value(); }
  const std::optional<Tokens>& genome() const { return genome_; }
  const Vector& embedding() const { return embedding_; }

  bool operator==(const Template& o) const { return genome_ == o.genome_; }

 private:
  friend class TemplateSpace;
  std::optional<Tokens> genome_;
  Vector embedding_;
};

// Genome -> embedding table: one d-vector per (position, symbol), summed over
// positions. The blank symbol 0 maps to the zero vector at every position.
class TemplateSpace {
 public:
  explicit TemplateSpace(const EnvConfig& cfg);

  // Explicit table, indexed [position * alphabet + symbol]. Used to build
  // constructed scenarios in tests.
  TemplateSpace(int length, int alphabet, int feat_dim, std::vector<Vector> table);

  Template make(const Tokens& genome) const;  // throws ContractError on bad genome
  Template empty() const { return Template::empty(feat_dim_); }

  int length() const { return length_; }
  int alphabet() const { return alphabet_; }
  int feat_dim() const { return feat_dim_; }
  const Vector& vector_at(int position, int symbol) const;

 private:
  int length_ = 0;
  int alphabet_ = 0;
  int feat_dim_ = 0;
  std::vector<Vector> table_;
};

struct AugmentedInput {
  int base_sample_id = 0;
  Vector features;
};

std::vector<Sample> make_dataset(const EnvConfig& cfg, Split split = Split::train);

AugmentedInput insert_template(const Sample& x, const Template& z);

// 1 iff tokens equal the sample target exactly. Throws ContractError on a
// length mismatch or an out-of-range token.
int reward(const Sample& x, std::span<const int> tokens, int vocab_size);

// Per-rollout success probability of a uniform policy.
double chance_success_probability(const EnvConfig& cfg);

// Count of insert_template calls with a non-empty template made on the
// calling thread.
std::uint64_t nonempty_template_insertions();

// Line-delimited dataset records: one JSON object per sample.
void save_dataset(const std::string& path, std::span<const Sample> samples);
std::vector<Sample> load_dataset(const std::string& path);

}  // namespace p2o
