#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jmqr/autograd.hpp"
#include "jmqr/forecast.hpp"
#include "jmqr/tensor.hpp"

namespace jmqr {

/// Sum over grid cells of squared residuals.
double l2_grid(const Tensor& y, const Tensor& y_hat);

/// Pinball loss max(tau r, (tau - 1) r) of a residual r = y - q.
double tilted(double tau, double residual);

/// Sum over cells of (y - mean)^2 + sum_j tilted(tau_j, y - q_j).
double joint_objective(const Tensor& y, const ForecastBundle& bundle, const QuantileLevels& levels);

/// What one output channel of a network is trained to predict.
struct Task {
  enum class Kind { mean, quantile };
  Kind kind = Kind::mean;
  double tau = 0.5;

  static Task mean() { return {Kind::mean, 0.5}; }
  static Task quantile(double tau);
  std::string label() const;
};

/// Channel layout (mean, q_1, ..., q_J) trained jointly.
std::vector<Task> joint_tasks(const QuantileLevels& levels);

/// Differentiable training loss.
///
/// predictions: B x [cells...] x K with one channel per task; targets: B x [cells...].
/// Squared error for mean channels and pinball for quantile channels, summed over cells and
/// channels and averaged over the batch. quantile_weight multiplies the pinball terms.
Var task_loss(Var predictions, const Tensor& targets, std::span<const Task> tasks,
              double quantile_weight = 1.0);

/// Value of task_loss on plain tensors.
double task_loss_value(const Tensor& predictions, const Tensor& targets,
                       std::span<const Task> tasks, double quantile_weight = 1.0);

}  // namespace jmqr
