#pragma once

#include <span>
#include <vector>

#include "p2o/env.hpp"
#include "p2o/grpo.hpp"

namespace p2o {

using DistillBatchItem = UpdateItem;

// distill: differentiate under the sample's original features (rollout context
// and gradient context are decoupled).
// dependency: differentiate under the features the trajectory was generated
// from, i.e. train directly on the augmented input.
enum class DistillMode { distill, dependency };

// Advantages are taken from the groups as generated. Throws DataError when a
// group's sample id is not in the dataset.
std::vector<DistillBatchItem> build_distill_batch(std::span<const RolloutGroup> groups,
                                                  std::span<const Sample> dataset, DistillMode mode);

}  // namespace p2o
