#include "altfreeze/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "altfreeze/metrics.hpp"

namespace altfreeze {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::temporal_update: return "temporal";
    case Phase::spatial_update: return "spatial";
    case Phase::joint: return "joint";
  }
  return "unknown";
}

Phase active_group(std::uint64_t counter, std::size_t spatial_frozen_iters,
                   std::size_t temporal_frozen_iters) {
  if (spatial_frozen_iters == 0 || temporal_frozen_iters == 0) {
    throw std::invalid_argument("freeze ratio terms must both be >= 1");
  }
  const std::uint64_t cycle = spatial_frozen_iters + temporal_frozen_iters;
  return counter % cycle < spatial_frozen_iters ? Phase::temporal_update : Phase::spatial_update;
}

double bce_loss(std::span<const double> probabilities, std::span<const double> labels,
                Reduction reduction) {
  if (probabilities.size() != labels.size() || probabilities.empty()) {
    throw std::invalid_argument("bce_loss: need equal, non-zero numbers of predictions and labels");
  }
  // sigmoid(+-30): the clamp applied to logits before the sigmoid.
  const double lo = 1.0 / (1.0 + std::exp(30.0));
  const double hi = 1.0 / (1.0 + std::exp(-30.0));
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_loss: labels must be 0 or 1");
    const double p = std::clamp(probabilities[i], lo, hi);
    // 1 - p has almost no significant digits near hi, so the clamped
    // endpoints take their log terms from the logit: log(1 - sigmoid(30)).
    const double log_q = p == hi ? -30.0 - std::log1p(std::exp(-30.0)) : std::log1p(-p);
    total -= y * std::log(p) + (1.0 - y) * log_q;
  }
  return reduction == Reduction::mean ? total / static_cast<double>(labels.size()) : total;
}

double cosine_lr(std::uint64_t iter, std::uint64_t total_iters, double initial_lr) {
  if (total_iters == 0) throw std::invalid_argument("cosine_lr: total iterations must be > 0");
  if (iter > total_iters) throw std::out_of_range("cosine_lr: iteration past the schedule end");
  const double progress = static_cast<double>(iter) / static_cast<double>(total_iters);
  return initial_lr * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

template <typename T>
SgdState<T>::SgdState(const std::vector<Parameter<T>>& params, double momentum_coefficient,
                      double learning_rate)
    : mu(momentum_coefficient), lr(learning_rate) {
  for (const auto& p : params) momentum.emplace_back(p.value.shape(), T{0});
}

template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, std::span<const std::size_t> active,
              const std::map<ParamId, Tensor<T>>& grads, SgdState<T>& state) {
  if (state.momentum.size() != params.size()) {
    throw std::invalid_argument("sgd_step: optimizer has " + std::to_string(state.momentum.size()) +
                                " buffers for " + std::to_string(params.size()) + " parameters");
  }
  const T mu = static_cast<T>(state.mu);
  const T lr = static_cast<T>(state.lr);
  for (std::size_t idx : active) {
    Parameter<T>& p = params.at(idx);
    const auto it = grads.find(idx);
    if (it == grads.end()) {
      throw std::invalid_argument("sgd_step: no gradient for " + p.info.name);
    }
    const Tensor<T>& g = it->second;
    if (g.shape() != p.value.shape()) {
      throw std::invalid_argument("sgd_step: gradient shape " + to_string(g.shape()) +
                                  " does not match " + p.info.name + " " +
                                  to_string(p.value.shape()));
    }
    Tensor<T>& v = state.momentum[idx];
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      p.value[i] -= lr * v[i];
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (clip_length == 0) throw std::invalid_argument("clip_length must be >= 1");
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("initial learning rate must be > 0");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0, 1)");
  if (spatial_frozen_iters == 0 || temporal_frozen_iters == 0) {
    throw std::invalid_argument("freeze ratio terms must both be >= 1");
  }
  if (fake_aug_prob < 0 || fake_aug_prob > 1 || same_video_prob < 0 || same_video_prob > 1) {
    throw std::invalid_argument("probabilities must lie in [0, 1]");
  }
}

std::vector<double> TrainLog::losses() const {
  std::vector<double> out;
  for (const auto& it : iterations) out.push_back(it.loss);
  return out;
}

std::string TrainLog::csv(const std::vector<std::string>& header) const {
  std::ostringstream os;
  for (const auto& line : header) os << "# " << line << '\n';
  os << "iter,epoch,phase,lr,loss,eval_auc\n" << std::setprecision(9);
  std::size_t e = 0;
  for (const auto& it : iterations) {
    os << it.iteration << ',' << it.epoch << ',' << to_string(it.phase) << ',' << it.lr << ','
       << it.loss << ",\n";
    while (e < evals.size() && evals[e].iteration == it.iteration + 1) {
      os << evals[e].iteration << ',' << evals[e].epoch << ",eval,,," << evals[e].auc << '\n';
      ++e;
    }
  }
  return os.str();
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return Rng(mix64(mix64(mix64(seed) ^ a) ^ b));
}

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

}  // namespace

template <typename T>
Trainer<T>::Trainer(Model<T>& model, const ClipDataset& data, TrainConfig config,
                    const ClipDataset* validation)
    : model_(model), data_(data), validation_(validation), config_(std::move(config)) {
  config_.validate();
  if (data_.records.empty()) throw std::invalid_argument("training set is empty");
  if (data_.count_label(0) == 0 || data_.count_label(1) == 0) {
    throw std::invalid_argument("training set needs both real and fake clips");
  }
  const Shape& in = model_.spec().input_shape;
  for (const auto& r : data_.records) {
    const Clip& c = r.clip;
    if (c.channels() != in[0] || c.height() != in[2] || c.width() != in[3] ||
        c.frames() < config_.clip_length) {
      throw std::invalid_argument("clip " + std::to_string(r.id) + " of shape " +
                                  to_string(c.tensor().shape()) + " does not fit the model input " +
                                  to_string(in));
    }
    if (r.label == 0) real_indices_.push_back(&r - data_.records.data());
  }
  if (config_.clip_length != in[1]) {
    throw std::invalid_argument("clip_length " + std::to_string(config_.clip_length) +
                                " differs from the model's " + std::to_string(in[1]) + " frames");
  }

  groups_ = group_of_params(model_);
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    all_params_.push_back(i);
    if (groups_[i] != ParamGroup::spatial) temporal_phase_params_.push_back(i);
    if (groups_[i] != ParamGroup::temporal) spatial_phase_params_.push_back(i);
  }
  sgd_ = SgdState<T>(model_.parameters(), config_.momentum, config_.lr);
  schedule_.spatial_frozen_iters = config_.spatial_frozen_iters;
  schedule_.temporal_frozen_iters = config_.temporal_frozen_iters;

  const std::size_t batch = std::min(config_.batch_size, data_.size());
  batches_per_epoch_ = data_.size() / batch;
  total_iters_ = batches_per_epoch_ * config_.epochs;
}

template <typename T>
bool Trainer<T>::done() const {
  if (config_.max_iterations && iteration_ >= config_.max_iterations) return true;
  return iteration_ >= total_iters_;
}

template <typename T>
Phase Trainer<T>::current_phase() const {
  return config_.alt_freezing ? schedule_.phase() : Phase::joint;
}

template <typename T>
std::span<const std::size_t> Trainer<T>::active_params(Phase phase) const {
  switch (phase) {
    case Phase::temporal_update: return temporal_phase_params_;
    case Phase::spatial_update: return spatial_phase_params_;
    case Phase::joint: break;
  }
  return all_params_;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Trainer<T>::make_batch(std::uint64_t iteration) const {
  const std::uint64_t epoch = iteration / batches_per_epoch_;
  const std::uint64_t position = iteration % batches_per_epoch_;
  const std::size_t batch = std::min(config_.batch_size, data_.size());

  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle = derived_rng(config_.seed, kShuffleStream, epoch);
  std::shuffle(order.begin(), order.end(), shuffle);

  const Shape& in = model_.spec().input_shape;
  const std::size_t clip_size = numel(in);
  Tensor<T> x({batch, in[0], in[1], in[2], in[3]});
  Tensor<T> labels({batch});
  FakeOptions fake_options;
  fake_options.same_video_prob = config_.same_video_prob;
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t idx = order[position * batch + s];
    const ClipRecord& rec = data_.records[idx];
    Rng rng = derived_rng(config_.seed, epoch, idx);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    Clip clip = rec.clip;
    if (clip.frames() > config_.clip_length) {
      const auto start = std::uniform_int_distribution<std::size_t>(
          0, clip.frames() - config_.clip_length)(rng);
      clip = clip_windows(clip, config_.clip_length)[start];
    }
    int label = rec.label;
    if (config_.fake_aug && label == 0 && u(rng) < config_.fake_aug_prob) {
      static constexpr FakeKind kKinds[] = {FakeKind::tdrop, FakeKind::trepeat, FakeKind::blend};
      const FakeKind kind = kKinds[std::uniform_int_distribution<int>(0, 2)(rng)];
      std::size_t partner_idx = real_indices_[std::uniform_int_distribution<std::size_t>(
          0, real_indices_.size() - 1)(rng)];
      Clip partner = data_.records[partner_idx].clip;
      if (partner.frames() > config_.clip_length) {
        partner = clip_windows(partner, config_.clip_length).front();
      }
      clip = make_fake(clip, partner, kind, rng, fake_options);
      label = 1;
    }
    clip = standard_augs(clip, rng, config_.standard_augs);
    std::copy(clip.tensor().values().begin(), clip.tensor().values().end(),
              x.data() + s * clip_size);
    labels[s] = static_cast<T>(label);
  }
  return {std::move(x), std::move(labels)};
}

template <typename T>
IterationLog Trainer<T>::step() {
  if (done()) throw std::logic_error("training already finished");
  IterationLog entry;
  entry.iteration = iteration_;
  entry.epoch = iteration_ / batches_per_epoch_;
  entry.phase = current_phase();
  entry.lr = cosine_lr(iteration_, total_iters_, config_.lr);

  auto [x, labels] = make_batch(iteration_);
  Tape<T> tape;
  const auto pass = model_.record(tape, x, Mode::train);
  const Var logits = clamp(tape, pass.logits, T{-30}, T{30});
  const Var loss = bce_with_logits(tape, logits, labels, config_.reduction);
  entry.loss = static_cast<double>(tape.value(loss)[0]);
  if (!std::isfinite(entry.loss)) {
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(iteration_));
  }
  const auto grads = tape.backward(loss);
  sgd_.lr = entry.lr;
  sgd_step(model_.parameters(), active_params(entry.phase), grads, sgd_);

  ++schedule_.counter;
  ++iteration_;
  log_.iterations.push_back(entry);

  if (validation_ && config_.eval_every > 0 && iteration_ % batches_per_epoch_ == 0) {
    const std::uint64_t finished_epochs = iteration_ / batches_per_epoch_;
    if (finished_epochs % config_.eval_every == 0) {
      const auto report = run_eval(model_, {NamedDataset{"val", "", validation_}}, 1, config_.seed);
      log_.evals.push_back(EvalLog{iteration_, finished_epochs - 1, report.datasets[0].auc});
    }
  }
  return entry;
}

template <typename T>
TrainLog Trainer<T>::run(const std::function<void(const IterationLog&)>& on_step) {
  while (!done()) {
    const IterationLog entry = step();
    if (on_step) on_step(entry);
  }
  return log_;
}

template <typename T>
TrainerState<T> Trainer<T>::state() const {
  return TrainerState<T>{iteration_, schedule_.counter, sgd_.momentum};
}

template <typename T>
void Trainer<T>::restore(const TrainerState<T>& state) {
  if (state.momentum.size() != sgd_.momentum.size()) {
    throw std::invalid_argument("trainer state has " + std::to_string(state.momentum.size()) +
                                " momentum buffers, model has " +
                                std::to_string(sgd_.momentum.size()) + " parameters");
  }
  for (std::size_t i = 0; i < state.momentum.size(); ++i) {
    if (state.momentum[i].shape() != sgd_.momentum[i].shape()) {
      throw std::invalid_argument("momentum buffer " + std::to_string(i) + " has wrong shape");
    }
  }
  iteration_ = state.iteration;
  schedule_.counter = state.counter;
  sgd_.momentum = state.momentum;
}

template <typename T>
TrainLog train(Model<T>& model, const ClipDataset& data, const TrainConfig& config,
               const ClipDataset* validation) {
  Trainer<T> trainer(model, data, config, validation);
  return trainer.run();
}

template struct SgdState<float>;
template struct SgdState<double>;
template void sgd_step(std::vector<Parameter<float>>&, std::span<const std::size_t>,
                       const std::map<ParamId, Tensor<float>>&, SgdState<float>&);
template void sgd_step(std::vector<Parameter<double>>&, std::span<const std::size_t>,
                       const std::map<ParamId, Tensor<double>>&, SgdState<double>&);
template class Trainer<float>;
template class Trainer<double>;
template TrainLog train(Model<float>&, const ClipDataset&, const TrainConfig&, const ClipDataset*);
template TrainLog train(Model<double>&, const ClipDataset&, const TrainConfig&, const ClipDataset*);

}  // namespace altfreeze
