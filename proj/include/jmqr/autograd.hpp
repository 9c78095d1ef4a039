#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "jmqr/tensor.hpp"

namespace jmqr {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so parents always precede
/// children and replaying indices backwards is a topological order.
///
/// A tape is single-threaded; independent tapes may run on separate threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Records an op output. The backward rule runs only if some parent requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  /// Zeroes every accumulator, seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  /// Adds g into the accumulator of node id (no-op for nodes without gradient).
  void accumulate(std::size_t id, const Tensor& g);
  /// Mutable accumulator for kernels that scatter directly; allocates on first use.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

/// Maps model parameter tensors onto tape leaves, one leaf per parameter per tape.
class Binder {
 public:
  explicit Binder(Tape& tape, bool requires_grad = true)
      : tape_(&tape), requires_grad_(requires_grad) {}

  Var operator()(const Tensor& parameter);
  /// Leaf bound to a parameter, or an invalid Var if it was never used.
  Var find(const Tensor& parameter) const;

  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  bool requires_grad_;
  std::unordered_map<const Tensor*, Var> bound_;
};

namespace ag {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var square(Var a);
/// Elementwise pinball max(tau r, (tau - 1) r); subgradient tau at r = 0.
Var pinball(Var r, double tau);
Var activation(Var x, Activation kind);
inline Var sigmoid(Var x) { return activation(x, Activation::sigmoid); }
inline Var tanh(Var x) { return activation(x, Activation::tanh); }
Var matmul(Var a, Var b);
/// Adds a bias vector along the last axis.
Var add_bias(Var x, Var bias);
/// Zero-padded 2-D cross-correlation, see conv2d_same.
Var conv2d(Var input, Var kernels);
Var reshape(Var x, Shape shape);
/// Slice j of the last axis; the axis is removed.
Var column(Var x, std::size_t j);
/// Multiplies by a constant mask tensor.
Var mask(Var x, const Tensor& mask);
/// Sum of all elements as a scalar.
Var sum(Var x);

}  // namespace ag

/// Scalar-valued function of a list of parameter tensors, expressed on a tape.
using TapeFunction = std::function<Var(Tape&, std::span<const Var> params)>;

/// Compares reverse-mode gradients against central differences.
/// Returns max over all parameter elements of |analytic - numeric| / max(1, |numeric|).
double grad_check(const TapeFunction& f, std::span<const Tensor> params, double eps = 1e-5);

}  // namespace jmqr
