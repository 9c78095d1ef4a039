#include "jmqr/losses.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace jmqr {

namespace {

void require_level(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("quantile level " + std::to_string(tau) + " outside (0, 1)");
  }
}

}  // namespace

double l2_grid(const Tensor& y, const Tensor& y_hat) {
  require_same_shape(y, y_hat, "l2_grid");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_hat[i];
    total += r * r;
  }
  return total;
}

double tilted(double tau, double residual) {
  require_level(tau);
  return std::max(tau * residual, (tau - 1.0) * residual);
}

double joint_objective(const Tensor& y, const ForecastBundle& bundle, const QuantileLevels& levels) {
  bundle.validate(levels.size());
  double total = l2_grid(y, bundle.mean);
  const std::size_t levels_count = levels.size();
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < levels_count; ++j) {
      total += tilted(levels[j], y[i] - bundle.quantiles[i * levels_count + j]);
    }
  }
  return total;
}

Task Task::quantile(double tau) {
  require_level(tau);
  return {Kind::quantile, tau};
}

std::string Task::label() const {
  if (kind == Kind::mean) return "mean";
  std::ostringstream out;
  out << "q" << tau;
  return out.str();
}

std::vector<Task> joint_tasks(const QuantileLevels& levels) {
  std::vector<Task> tasks{Task::mean()};
  for (double tau : levels) tasks.push_back(Task::quantile(tau));
  return tasks;
}

namespace {

void check_layout(const Shape& pred, const Shape& targets, std::size_t task_count) {
  if (pred.empty() || pred.back() != task_count) {
    throw ShapeError("task loss: prediction channel axis " + to_string(pred) + " does not hold " +
                     std::to_string(task_count) + " tasks");
  }
  Shape spatial(pred.begin(), pred.end() - 1);
  if (spatial != targets) {
    throw ShapeError("task loss: predictions " + to_string(pred) + " do not align with targets " +
                     to_string(targets));
  }
  if (targets.empty() || targets[0] == 0) throw ShapeError("task loss: empty batch");
}

}  // namespace

Var task_loss(Var predictions, const Tensor& targets, std::span<const Task> tasks,
              double quantile_weight) {
  check_layout(predictions.shape(), targets.shape(), tasks.size());
  Tape& tape = *predictions.tape();
  Var y = tape.constant(targets);
  Var total;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    Var residual = ag::sub(y, ag::column(predictions, k));
    Var term = tasks[k].kind == Task::Kind::mean
                   ? ag::sum(ag::square(residual))
                   : ag::scale(ag::sum(ag::pinball(residual, tasks[k].tau)), quantile_weight);
    total = total.valid() ? ag::add(total, term) : term;
  }
  return ag::scale(total, 1.0 / static_cast<double>(targets.dim(0)));
}

double task_loss_value(const Tensor& predictions, const Tensor& targets,
                       std::span<const Task> tasks, double quantile_weight) {
  check_layout(predictions.shape(), targets.shape(), tasks.size());
  const std::size_t width = tasks.size();
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t k = 0; k < width; ++k) {
      const double r = targets[i] - predictions[i * width + k];
      total += tasks[k].kind == Task::Kind::mean ? r * r
                                                 : quantile_weight * tilted(tasks[k].tau, r);
    }
  }
  return total / static_cast<double>(targets.dim(0));
}

}  // namespace jmqr
