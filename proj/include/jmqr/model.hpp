#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmqr/autograd.hpp"
#include "jmqr/layers.hpp"
#include "jmqr/tensor.hpp"

namespace jmqr {

/// Inputs and targets sharing a leading sample axis.
struct SupervisedSet {
  Tensor inputs;   // N x ...
  Tensor targets;  // N x [cells...]

  std::size_t size() const { return targets.rank() == 0 ? 0 : targets.dim(0); }
  bool empty() const { return size() == 0; }
  SupervisedSet subset(std::span<const std::size_t> rows) const;
};

/// A trainable network mapping a batch of inputs to B x [cells...] x K outputs.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string family() const = 0;
  virtual std::size_t outputs() const = 0;
  virtual std::vector<NamedParameter> parameters() = 0;
  virtual Var forward(Binder& bind, const Tensor& inputs, DropoutContext& ctx) const = 0;
  /// Architecture descriptor; together with the weights it fully reconstructs the model.
  virtual nlohmann::json describe() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  /// Deterministic evaluation-mode forward pass, processed in chunks.
  Tensor predict(const Tensor& inputs, std::size_t chunk = 256) const;
  /// Forward pass with dropout active (MC mode), drawing masks from rng.
  Tensor predict_stochastic(const Tensor& inputs, Rng& rng, std::size_t chunk = 256) const;

  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& values);
};

}  // namespace jmqr
