#pragma once

#include <vector>

#include "altfreeze/partition.hpp"
#include "altfreeze/synth.hpp"
#include "altfreeze/trainer.hpp"

namespace testing {

struct FreezeReport {
  std::size_t temporal_phases = 0;
  std::size_t spatial_phases = 0;
  // Steps where a frozen parameter or its momentum buffer changed at all.
  std::size_t frozen_changed = 0;
  // Steps where some shared or active parameter kept its exact value.
  std::size_t updated_unchanged = 0;
};

inline altfreeze::ClipDataset small_training_set(std::size_t per_label, std::uint64_t seed) {
  altfreeze::DatasetSpec spec;
  spec.seed = seed;
  spec.train = {per_label, per_label};
  return altfreeze::build_training_set(spec);
}

/// Steps a float trainer `iterations` times and compares every parameter and
/// momentum buffer bitwise before and after each step.
inline FreezeReport run_freeze_check(std::size_t iterations, std::size_t batch, std::uint64_t seed,
                                     std::size_t i_s = 20, std::size_t i_t = 1) {
  using namespace altfreeze;
  const ClipDataset data = small_training_set(batch * 2, seed);
  Model<float> model = build_model<float>(ModelSpec::reference(), seed);
  TrainConfig config;
  config.batch_size = batch;
  config.seed = seed;
  config.spatial_frozen_iters = i_s;
  config.temporal_frozen_iters = i_t;
  config.epochs = iterations / (data.size() / batch) + 1;
  Trainer<float> trainer(model, data, config);
  const auto& groups = trainer.groups();
  FreezeReport report;
  for (std::size_t it = 0; it < iterations; ++it) {
    const std::vector<Parameter<float>> before = model.parameters();
    const std::vector<Tensor<float>> momentum_before = trainer.optimizer().momentum;
    const Phase phase = trainer.step().phase;
    const ParamGroup frozen = phase == Phase::temporal_update ? ParamGroup::spatial : ParamGroup::temporal;
    (phase == Phase::temporal_update ? report.temporal_phases : report.spatial_phases)++;
    bool frozen_changed = false, updated_unchanged = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const bool same = bitwise_equal(before[i].value, model.parameters()[i].value);
      if (groups[i] == frozen) {
        frozen_changed = frozen_changed || !same ||
                         !bitwise_equal(momentum_before[i], trainer.optimizer().momentum[i]);
      } else {
        updated_unchanged = updated_unchanged || same;
      }
    }
    report.frozen_changed += frozen_changed;
    report.updated_unchanged += updated_unchanged;
  }
  return report;
}

}  // namespace testing
