#include <cmath>
#include <iostream>
#include <stdexcept>

#include "jmqr/models.hpp"

namespace jmqr {

TrainResult fit_joint(Model& model, const SupervisedSet& train_set, const SupervisedSet* val_set,
                      const QuantileLevels& levels, const TrainConfig& cfg) {
  if (model.outputs() != 1 + levels.size()) {
    throw std::invalid_argument("fit_joint: model has " + std::to_string(model.outputs()) +
                                " heads, expected 1 + " + std::to_string(levels.size()));
  }
  const std::vector<Task> tasks = joint_tasks(levels);
  return train(model, train_set, val_set, tasks, cfg);
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t task_index) {
  return task_index == 0 ? seed : derive_seed(seed, task_index);
}

std::vector<IndependentMember> fit_independent(const ModelFactory& factory,
                                               const SupervisedSet& train_set,
                                               const SupervisedSet* val_set,
                                               const QuantileLevels& levels,
                                               const TrainConfig& cfg) {
  const std::vector<Task> tasks = joint_tasks(levels);
  std::vector<IndependentMember> members;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    std::unique_ptr<Model> model = factory(k);
    if (model->outputs() != 1) throw std::invalid_argument("fit_independent: members need one output");
    TrainConfig member_cfg = cfg;
    member_cfg.seed = member_seed(cfg.seed, k);
    const Task task[1] = {tasks[k]};
    TrainResult result = train(*model, train_set, val_set, task, member_cfg);
    members.push_back({tasks[k], std::move(model), std::move(result)});
  }
  return members;
}

ForecastBundle stack_member_outputs(const std::vector<Tensor>& outputs) {
  if (outputs.empty()) throw std::invalid_argument("stack_member_outputs: no member outputs");
  const Shape& one = outputs.front().shape();
  if (one.empty() || one.back() != 1) {
    throw ShapeError("member outputs must end in a single channel, got " + to_string(one));
  }
  for (const Tensor& t : outputs) require_same_shape(outputs.front(), t, "member outputs");
  Shape spatial(one.begin(), one.end() - 1);
  const std::size_t levels = outputs.size() - 1;
  ForecastBundle bundle;
  bundle.mean = outputs.front().reshaped(spatial);
  Shape qshape = spatial;
  qshape.push_back(levels);
  bundle.quantiles = Tensor(qshape);
  for (std::size_t j = 0; j < levels; ++j) {
    const Tensor& q = outputs[j + 1];
    for (std::size_t i = 0; i < bundle.mean.size(); ++i) bundle.quantiles[i * levels + j] = q[i];
  }
  return bundle;
}

ForecastBundle predict_independent(const std::vector<IndependentMember>& members,
                                   const Tensor& inputs) {
  if (members.empty() || members.front().task.kind != Task::Kind::mean) {
    throw std::invalid_argument("predict_independent: first member must be the mean model");
  }
  std::vector<Tensor> outputs;
  for (const auto& m : members) outputs.push_back(m.model->predict(inputs));
  return stack_member_outputs(outputs);
}

LinearModel fit_linear_qr(const SupervisedSet& train_set, const Task& task, const TrainConfig& cfg,
                          std::vector<std::string>* warnings, TrainResult* result) {
  const Tensor& x = train_set.inputs;
  if (x.rank() != 2) throw ShapeError("fit_linear_qr: features must be N x F, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), f = x.dim(1);
  if (n == 0) throw std::invalid_argument("fit_linear_qr: empty training set");

  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < f; ++c) {
    double lo = x[c], hi = x[c];
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, x[i * f + c]);
      hi = std::max(hi, x[i * f + c]);
    }
    if (hi > lo) {
      kept.push_back(c);
    } else {
      const std::string msg = "fit_linear_qr: feature column " + std::to_string(c) +
                              " is constant on the training split and was dropped";
      std::cerr << "warning: " << msg << '\n';
      if (warnings) warnings->push_back(msg);
    }
  }

  LinearModel model(f, std::move(kept));
  Task tasks[1] = {task};
  TrainResult r = train(model, train_set, nullptr, tasks, cfg);
  if (result) *result = std::move(r);
  return model;
}

}  // namespace jmqr
