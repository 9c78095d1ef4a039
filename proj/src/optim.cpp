#include "jmqr/optim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace jmqr {

AdamState::AdamState(AdamConfig config, const std::vector<Shape>& shapes) : config_(config) {
  for (const Shape& s : shapes) {
    m_.emplace_back(s);
    v_.emplace_back(s);
  }
}

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != state.m_.size() || grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require_same_shape(*params[i], grads[i], "adam_step");
    if (!grads[i].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter " + std::to_string(i) +
                         " at step " + std::to_string(state.t_ + 1));
    }
  }
  const AdamConfig& c = state.config_;
  state.t_ += 1;
  const double t = static_cast<double>(state.t_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& theta = *params[i];
    Tensor& m = state.m_[i];
    Tensor& v = state.v_[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      theta[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

TrainResult train(Model& model, const SupervisedSet& train_set, const SupervisedSet* val_set,
                  std::span<const Task> tasks, const TrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (model.outputs() != tasks.size()) {
    throw std::invalid_argument("train: model has " + std::to_string(model.outputs()) +
                                " outputs but " + std::to_string(tasks.size()) + " tasks");
  }
  const bool has_val = val_set != nullptr && !val_set->empty();

  TrainResult result;
  if (cfg.epochs == 0) return result;

  Rng rng(cfg.seed);
  std::vector<NamedParameter> params = model.parameters();
  std::vector<Shape> shapes;
  std::vector<Tensor*> targets;
  for (const NamedParameter& p : params) {
    shapes.push_back(p.tensor->shape());
    targets.push_back(p.tensor);
  }
  AdamState adam(AdamConfig{cfg.learning_rate}, shapes);

  std::vector<Tensor> last_good = model.snapshot();
  std::vector<Tensor> best = last_good;
  std::size_t since_best = 0;

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Tensor inputs = train_set.inputs.gather_rows(rows);
      const Tensor batch_targets = train_set.targets.gather_rows(rows);

      double value = 0.0;
      try {
        Tape tape;
        Binder bind(tape);
        DropoutContext ctx{DropoutMode::train, &rng};
        Var loss = task_loss(model.forward(bind, inputs, ctx), batch_targets, tasks,
                             cfg.quantile_weight);
        value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("training loss became non-finite");
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (const NamedParameter& p : params) {
          Var leaf = bind.find(*p.tensor);
          grads.push_back(leaf.valid() ? leaf.grad() : Tensor(p.tensor->shape()));
        }
        adam_step(adam, targets, grads);
      } catch (const NumericError& e) {
        model.restore(last_good);
        throw TrainingAborted(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")",
                              result);
      }
      weighted += value * static_cast<double>(end - begin);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = weighted / static_cast<double>(n);
    if (has_val) {
      record.val_loss = task_loss_value(model.predict(val_set->inputs), val_set->targets, tasks,
                                        cfg.quantile_weight);
    }
    result.history.push_back(record);
    last_good = model.snapshot();

    if (has_val) {
      if (!std::isfinite(record.val_loss)) {
        throw TrainingAborted("validation loss became non-finite at epoch " +
                                  std::to_string(epoch), result);
      }
      if (record.val_loss < result.best_val_loss) {
        result.best_val_loss = record.val_loss;
        result.best_epoch = epoch;
        best = last_good;
        since_best = 0;
      } else if (++since_best >= cfg.patience && cfg.patience > 0) {
        result.stopped_early = true;
        break;
      }
    }
  }

  if (has_val && cfg.restore_best && result.best_epoch > 0) {
    model.restore(best);
  } else if (!has_val) {
    result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  char buffer[64];
  for (const EpochRecord& r : history) {
    out << r.epoch << ',';
    std::snprintf(buffer, sizeof buffer, "%.17g", r.train_loss);
    out << buffer << ',';
    if (std::isfinite(r.val_loss)) {
      std::snprintf(buffer, sizeof buffer, "%.17g", r.val_loss);
      out << buffer;
    }
    out << '\n';
  }
  return out.str();
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << history_csv(history);
}

}  // namespace jmqr
