#pragma once

#include <span>
#include <string>
#include <vector>

#include "p2o/rng.hpp"
#include "p2o/types.hpp"

namespace p2o {

// Factorized per-position softmax policy: position l draws its token from
// softmax(W_l * features + b_l). Also used as the gradient container, since
// gradients share the parameter shape.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(int vocab_size, int seq_len, int feat_dim);  // zero-initialized

  int vocab_size() const { return vocab_; }
  int seq_len() const { return seq_len_; }
  int feat_dim() const { return dim_; }

  double& weight(int pos, int token, int k) { return weights_[index(pos, token) * dim_ + k]; }
  double weight(int pos, int token, int k) const { return weights_[index(pos, token) * dim_ + k]; }
  double& bias(int pos, int token) { return bias_[index(pos, token)]; }
  double bias(int pos, int token) const { return bias_[index(pos, token)]; }

  // Row of W_l for one token.
  std::span<const double> weight_row(int pos, int token) const {
    return {weights_.data() + index(pos, token) * dim_, static_cast<std::size_t>(dim_)};
  }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& biases() { return bias_; }
  const std::vector<double>& biases() const { return bias_; }

  std::size_t size() const { return weights_.size() + bias_.size(); }
  // Flat view index: weights first, then biases.
  double& at(std::size_t i) { return i < weights_.size() ? weights_[i] : bias_[i - weights_.size()]; }
  double at(std::size_t i) const { return i < weights_.size() ? weights_[i] : bias_[i - weights_.size()]; }

  void axpy(double a, const PolicyParams& x);  // this += a * x
  bool all_finite() const;
  bool same_shape(const PolicyParams& o) const {
    return vocab_ == o.vocab_ && seq_len_ == o.seq_len_ && dim_ == o.dim_;
  }

  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t index(int pos, int token) const { return static_cast<std::size_t>(pos * vocab_ + token); }

  int vocab_ = 0;
  int seq_len_ = 0;
  int dim_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

// Raw logits at one position.
Vector position_logits(const PolicyParams& params, int pos, std::span<const double> features);

// Temperature 0 selects greedy (argmax, lowest index on ties). Negative or
// non-finite temperatures are a contract violation; non-finite logits raise
// NumericalError.
Trajectory sample_trajectory(const PolicyParams& params, std::span<const double> features, double temperature,
                             Rng& rng);

double log_prob(const PolicyParams& params, std::span<const double> features, std::span<const int> tokens);

// Log-probability under the temperature-scaled sampling distribution
// (equals log_prob at temperature 1; 0 or -inf in greedy mode).
double sampling_log_prob(const PolicyParams& params, std::span<const double> features, std::span<const int> tokens,
                         double temperature);

// d/dW_l = (onehot(y_l) - softmax_l) (x) features, d/db_l = onehot(y_l) - softmax_l.
PolicyParams grad_log_prob(const PolicyParams& params, std::span<const double> features,
                           std::span<const int> tokens);

// Accumulates scale * grad_log_prob into out without allocating a gradient.
void add_grad_log_prob(const PolicyParams& params, std::span<const double> features, std::span<const int> tokens,
                       double scale, PolicyParams& out);

enum class CheckpointFormat { text, binary };

// Text format keeps 17 significant digits so loading is bit-exact.
void save_checkpoint(const std::string& path, const PolicyParams& params,
                     CheckpointFormat format = CheckpointFormat::text);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace p2o
