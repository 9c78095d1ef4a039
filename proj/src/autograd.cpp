#include "jmqr/autograd.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace jmqr {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  const std::size_t self = nodes_.size();
  bool needs = false;
  for (std::size_t p : parents) {
    assert(p < self && "tape parents must precede their children");
    needs = needs || nodes_[p].requires_grad;
  }
  Node node{std::move(value), {}, std::move(parents), {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, self);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  axpy(node.grad, 1.0, g);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
  }
  for (Node& node : nodes_) {
    node.grad = node.requires_grad ? Tensor(node.value.shape()) : Tensor();
  }
  nodes_[loss.id()].grad = Tensor(loss.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && node.requires_grad) node.backward(*this, i);
  }
}

Var Binder::operator()(const Tensor& parameter) {
  auto it = bound_.find(&parameter);
  if (it != bound_.end()) return it->second;
  Var v = tape_->leaf(parameter, requires_grad_);
  bound_.emplace(&parameter, v);
  return v;
}

Var Binder::find(const Tensor& parameter) const {
  auto it = bound_.find(&parameter);
  return it == bound_.end() ? Var{} : it->second;
}

namespace ag {

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands recorded on different tapes");
  return *a.tape();
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(jmqr::add(a.value(), b.value()), {a.id(), b.id()},
                     [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
                       t.accumulate(a, t.grad(self));
                       t.accumulate(b, t.grad(self));
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(jmqr::sub(a.value(), b.value()), {a.id(), b.id()},
                     [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
                       t.accumulate(a, t.grad(self));
                       t.accumulate(b, jmqr::scale(t.grad(self), -1.0));
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(hadamard(a.value(), b.value()), {a.id(), b.id()},
                     [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
                       if (t.requires_grad(a)) t.accumulate(a, hadamard(t.grad(self), t.value(b)));
                       if (t.requires_grad(b)) t.accumulate(b, hadamard(t.grad(self), t.value(a)));
                     });
}

Var scale(Var a, double factor) {
  return a.tape()->record(jmqr::scale(a.value(), factor), {a.id()},
                          [a = a.id(), factor](Tape& t, std::size_t self) {
                            t.accumulate(a, jmqr::scale(t.grad(self), factor));
                          });
}

Var square(Var a) {
  return a.tape()->record(hadamard(a.value(), a.value()), {a.id()},
                          [a = a.id()](Tape& t, std::size_t self) {
                            Tensor g = hadamard(t.grad(self), t.value(a));
                            t.accumulate(a, jmqr::scale(g, 2.0));
                          });
}

Var pinball(Var r, double tau) {
  const Tensor& rv = r.value();
  Tensor out(rv.shape());
  for (std::size_t i = 0; i < rv.size(); ++i) {
    out[i] = std::max(tau * rv[i], (tau - 1.0) * rv[i]);
  }
  return r.tape()->record(std::move(out), {r.id()}, [r = r.id(), tau](Tape& t, std::size_t self) {
    const Tensor& rv = t.value(r);
    Tensor g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= rv[i] >= 0.0 ? tau : tau - 1.0;
    t.accumulate(r, g);
  });
}

Var activation(Var x, Activation kind) {
  return x.tape()->record(jmqr::activation(x.value(), kind), {x.id()},
                          [x = x.id(), kind](Tape& t, std::size_t self) {
                            Tensor d = activation_grad_from_output(t.value(self), kind);
                            t.accumulate(x, hadamard(t.grad(self), d));
                          });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(jmqr::matmul(a.value(), b.value()), {a.id(), b.id()},
                     [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
                       if (t.requires_grad(a)) t.accumulate(a, matmul_nt(t.grad(self), t.value(b)));
                       if (t.requires_grad(b)) t.accumulate(b, matmul_tn(t.value(a), t.grad(self)));
                     });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = same_tape(x, bias);
  return tape.record(jmqr::add_bias(x.value(), bias.value()), {x.id(), bias.id()},
                     [x = x.id(), b = bias.id()](Tape& t, std::size_t self) {
                       t.accumulate(x, t.grad(self));
                       if (t.requires_grad(b)) t.accumulate(b, sum_to_last_axis(t.grad(self)));
                     });
}

Var conv2d(Var input, Var kernels) {
  Tape& tape = same_tape(input, kernels);
  return tape.record(conv2d_same(input.value(), kernels.value()), {input.id(), kernels.id()},
                     [x = input.id(), k = kernels.id()](Tape& t, std::size_t self) {
                       if (t.requires_grad(x)) {
                         t.accumulate(x, conv2d_same_grad_input(t.grad(self), t.value(k)));
                       }
                       if (t.requires_grad(k)) {
                         const Tensor& kv = t.value(k);
                         t.accumulate(k, conv2d_same_grad_kernels(t.value(x), t.grad(self),
                                                                  kv.dim(0), kv.dim(1)));
                       }
                     });
}

Var reshape(Var x, Shape shape) {
  return x.tape()->record(x.value().reshaped(std::move(shape)), {x.id()},
                          [x = x.id()](Tape& t, std::size_t self) {
                            t.accumulate(x, t.grad(self).reshaped(t.value(x).shape()));
                          });
}

Var column(Var x, std::size_t j) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || j >= xv.shape().back()) {
    throw ShapeError("column " + std::to_string(j) + " out of range for " + to_string(xv.shape()));
  }
  const std::size_t width = xv.shape().back();
  Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i * width + j];
  return x.tape()->record(std::move(out), {x.id()}, [x = x.id(), j, width](Tape& t, std::size_t self) {
    Tensor& g = t.grad_buffer(x);
    const Tensor& go = t.grad(self);
    for (std::size_t i = 0; i < go.size(); ++i) g[i * width + j] += go[i];
  });
}

Var mask(Var x, const Tensor& m) {
  return x.tape()->record(hadamard(x.value(), m), {x.id()}, [x = x.id(), m](Tape& t, std::size_t self) {
    t.accumulate(x, hadamard(t.grad(self), m));
  });
}

Var sum(Var x) {
  return x.tape()->record(Tensor::scalar(jmqr::sum(x.value())), {x.id()},
                          [x = x.id()](Tape& t, std::size_t self) {
                            t.accumulate(x, Tensor(t.value(x).shape(), t.grad(self).item()));
                          });
}

}  // namespace ag

double grad_check(const TapeFunction& f, std::span<const Tensor> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    Var loss = f(tape, leaves);
    require_finite(loss.value(), "grad_check");
    tape.backward(loss);
    for (Var v : leaves) analytic.push_back(v.grad());
  }

  auto evaluate = [&](const std::vector<Tensor>& probe) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : probe) leaves.push_back(tape.constant(p));
    const double value = f(tape, leaves).value().item();
    if (!std::isfinite(value)) throw NumericError("grad_check: non-finite function value");
    return value;
  };

  std::vector<Tensor> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double saved = probe[p][i];
      probe[p][i] = saved + eps;
      const double plus = evaluate(probe);
      probe[p][i] = saved - eps;
      const double minus = evaluate(probe);
      probe[p][i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace jmqr
