#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "jmqr/losses.hpp"
#include "jmqr/model.hpp"
#include "jmqr/tensor.hpp"

namespace jmqr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first and second moments plus the step counter.
class AdamState {
 public:
  AdamState(AdamConfig config, const std::vector<Shape>& shapes);

  const AdamConfig& config() const { return config_; }
  std::size_t step_count() const { return t_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  friend void adam_step(AdamState&, std::span<Tensor* const>, std::span<const Tensor>);

  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// Bias-corrected Adam update: theta -= lr * m_hat / (sqrt(v_hat) + eps).
/// Rejects non-finite gradients before touching any state.
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  /// Epochs without validation improvement before stopping; 0 disables early stopping.
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  /// Multiplier on the pinball terms of the objective.
  double quantile_weight = 1.0;
  /// Return the best-validation snapshot rather than the final weights.
  bool restore_best = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Thrown when the loss becomes non-finite. The model is left at its last good snapshot.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, TrainResult partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const TrainResult& partial() const { return partial_; }

 private:
  TrainResult partial_;
};

/// Mini-batch Adam training of `model` on the given task layout.
///
/// Train windows are reshuffled every epoch from the run rng; the validation set (optional)
/// is evaluated in order, in evaluation mode, after each epoch.
TrainResult train(Model& model, const SupervisedSet& train_set, const SupervisedSet* val_set,
                  std::span<const Task> tasks, const TrainConfig& cfg);

/// CSV with header "epoch,train_loss,val_loss"; missing validation losses are left empty.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace jmqr
