#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altfreeze/augment.hpp"
#include "altfreeze/autodiff.hpp"
#include "altfreeze/model.hpp"
#include "altfreeze/partition.hpp"
#include "altfreeze/synth.hpp"

namespace altfreeze {

/// TemporalUpdate: spatial weights frozen. SpatialUpdate: temporal weights
/// frozen. Joint: nothing frozen (freezing disabled).
enum class Phase : std::uint8_t { temporal_update, spatial_update, joint };

const char* to_string(Phase phase);

/// TemporalUpdate when counter mod (I_s + I_t) < I_s, else SpatialUpdate.
Phase active_group(std::uint64_t counter, std::size_t spatial_frozen_iters,
                   std::size_t temporal_frozen_iters);

/// Alternating schedule: I_s iterations with spatial weights frozen, then I_t
/// iterations with temporal weights frozen, repeated.
struct FreezeSchedule {
  std::size_t spatial_frozen_iters = 20;   // I_s
  std::size_t temporal_frozen_iters = 1;   // I_t
  std::uint64_t counter = 0;

  std::size_t cycle_length() const { return spatial_frozen_iters + temporal_frozen_iters; }
  Phase phase() const {
    return active_group(counter, spatial_frozen_iters, temporal_frozen_iters);
  }
};

/// -sum(y log p + (1-y) log(1-p)), divided by N for Reduction::mean.
/// Probabilities are clamped to the sigmoid range of logits in [-30, 30].
double bce_loss(std::span<const double> probabilities, std::span<const double> labels,
                Reduction reduction);

/// alpha0 * (1 + cos(pi * iter / total)) / 2.
double cosine_lr(std::uint64_t iter, std::uint64_t total_iters, double initial_lr);

template <typename T>
struct SgdState {
  std::vector<Tensor<T>> momentum;  // one buffer per model parameter
  double mu = 0.9;
  double lr = 0.05;

  SgdState() = default;
  SgdState(const std::vector<Parameter<T>>& params, double momentum_coefficient, double lr);
};

/// v <- mu v + g; theta <- theta - lr v for the listed parameters only.
/// Parameters and buffers outside `active` are not touched.
template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, std::span<const std::size_t> active,
              const std::map<ParamId, Tensor<T>>& grads, SgdState<T>& state);

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t clip_length = 8;
  std::size_t epochs = 200;
  // Stops early after this many iterations when nonzero. The cosine schedule
  // still spans the full epoch budget.
  std::uint64_t max_iterations = 0;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t spatial_frozen_iters = 20;
  std::size_t temporal_frozen_iters = 1;
  bool alt_freezing = true;
  std::uint64_t seed = 0;
  bool fake_aug = true;
  double fake_aug_prob = 0.5;
  double same_video_prob = 0.5;
  AugmentToggles standard_augs;
  Reduction reduction = Reduction::mean;
  std::size_t eval_every = 0;  // epochs; 0 disables validation AUC

  /// Throws std::invalid_argument on invalid values.
  void validate() const;
};

struct IterationLog {
  std::uint64_t iteration = 0;
  std::uint64_t epoch = 0;
  Phase phase = Phase::joint;
  double lr = 0.0;
  double loss = 0.0;
};

struct EvalLog {
  std::uint64_t iteration = 0;
  std::uint64_t epoch = 0;
  double auc = 0.0;
};

struct TrainLog {
  std::vector<IterationLog> iterations;
  std::vector<EvalLog> evals;

  std::vector<double> losses() const;
  /// CSV with columns iter,epoch,phase,lr,loss,eval_auc; `header` lines are
  /// written first as '#' comments.
  std::string csv(const std::vector<std::string>& header = {}) const;
};

template <typename T>
struct TrainerState {
  std::uint64_t iteration = 0;
  std::uint64_t counter = 0;
  std::vector<Tensor<T>> momentum;
};

/// Alternating-freeze SGD over a clip dataset. Every sampled quantity derives
/// from (seed, epoch, index), so a run restored from TrainerState continues
/// exactly as the uninterrupted run would.
template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, const ClipDataset& data, TrainConfig config,
          const ClipDataset* validation = nullptr);

  std::uint64_t total_iterations() const { return total_iters_; }
  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t batches_per_epoch() const { return batches_per_epoch_; }
  bool done() const;

  /// One minibatch: augment, forward, loss, backward, update active groups.
  IterationLog step();
  /// Runs until done(); returns every iteration plus validation rows.
  TrainLog run(const std::function<void(const IterationLog&)>& on_step = {});

  Phase current_phase() const;
  /// Parameter indices updated in `phase`.
  std::span<const std::size_t> active_params(Phase phase) const;
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const SgdState<T>& optimizer() const { return sgd_; }
  const FreezeSchedule& schedule() const { return schedule_; }
  const TrainConfig& config() const { return config_; }
  const TrainLog& log() const { return log_; }

  TrainerState<T> state() const;
  void restore(const TrainerState<T>& state);

  /// Assembles the augmented minibatch for `iteration` with its labels.
  std::pair<Tensor<T>, Tensor<T>> make_batch(std::uint64_t iteration) const;

 private:
  Model<T>& model_;
  const ClipDataset& data_;
  const ClipDataset* validation_;
  TrainConfig config_;
  std::vector<ParamGroup> groups_;
  std::vector<std::size_t> temporal_phase_params_;
  std::vector<std::size_t> spatial_phase_params_;
  std::vector<std::size_t> all_params_;
  std::vector<std::size_t> real_indices_;
  SgdState<T> sgd_;
  FreezeSchedule schedule_;
  std::uint64_t iteration_ = 0;
  std::uint64_t batches_per_epoch_ = 0;
  std::uint64_t total_iters_ = 0;
  TrainLog log_;
};

/// Convenience wrapper: constructs a Trainer and runs it.
template <typename T>
TrainLog train(Model<T>& model, const ClipDataset& data, const TrainConfig& config,
               const ClipDataset* validation = nullptr);

}  // namespace altfreeze
