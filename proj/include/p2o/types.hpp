#pragma once

#include <vector>

namespace p2o {

using Vector = std::vector<double>;
using Tokens = std::vector<int>;

// A sampled action sequence together with the context it was generated under.
struct Trajectory {
  Tokens tokens;
  Vector gen_features;        // features the policy actually saw at sampling time
  double gen_log_prob = 0.0;  // log-probability under the sampling distribution

  bool operator==(const Trajectory&) const = default;
};

}  // namespace p2o
