#include "p2o/distill.hpp"

#include <unordered_map>

#include "p2o/error.hpp"

namespace p2o {

std::vector<DistillBatchItem> build_distill_batch(std::span<const RolloutGroup> groups,
                                                  std::span<const Sample> dataset, DistillMode mode) {
  std::unordered_map<int, const Sample*> by_id;
  by_id.reserve(dataset.size());
  for (const Sample& s : dataset) by_id.emplace(s.id, &s);

  std::vector<DistillBatchItem> batch;
  for (const RolloutGroup& g : groups) {
    const auto it = by_id.find(g.sample_id);
    if (it == by_id.end()) throw DataError("build_distill_batch: unknown sample id " + std::to_string(g.sample_id));
    for (std::size_t k = 0; k < g.trajectories.size(); ++k) {
      DistillBatchItem item;
      item.sample_id = g.sample_id;
      item.trajectory = g.trajectories[k];
      item.advantage = g.advantages[k];
      item.used_template_id = k < g.template_ids.size() ? g.template_ids[k] : std::nullopt;
      item.gradient_features =
          mode == DistillMode::distill ? it->second->features : g.trajectories[k].gen_features;
      batch.push_back(std::move(item));
    }
  }
  return batch;
}

}  // namespace p2o
