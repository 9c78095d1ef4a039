#include "jmqr/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace jmqr {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

// ---------------------------------------------------------------------------- dropout

namespace {

void require_keep(double keep) {
  if (!(keep > 0.0 && keep <= 1.0)) {
    throw std::invalid_argument("dropout keep probability must lie in (0, 1], got " +
                                std::to_string(keep));
  }
}

}  // namespace

Tensor dropout_mask(const Shape& shape, double keep, Rng& rng) {
  require_keep(keep);
  Tensor mask(shape);
  const double scale = 1.0 / keep;
  for (double& v : mask.data()) v = rng.bernoulli(keep) ? scale : 0.0;
  return mask;
}

Tensor dropout(const Tensor& x, double keep, DropoutMode mode, Rng& rng) {
  require_keep(keep);
  if (mode == DropoutMode::eval || keep == 1.0) return x;
  return hadamard(x, dropout_mask(x.shape(), keep, rng));
}

Var dropout(Var x, double keep, DropoutContext& ctx) {
  require_keep(keep);
  if (!ctx.active(keep)) return x;
  if (ctx.rng == nullptr) throw std::logic_error("dropout: active mode without an rng");
  return ag::mask(x, dropout_mask(x.shape(), keep, *ctx.rng));
}

// ---------------------------------------------------------------------------- dense

DenseLayer DenseLayer::create(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer;
  layer.weights = glorot_uniform(Shape{in, out}, in, out, rng);
  layer.bias = Tensor(Shape{out});
  layer.act = act;
  return layer;
}

Var DenseLayer::forward(Binder& bind, Var x) const {
  if (x.value().rank() != 2 || x.value().dim(1) != in()) {
    throw ShapeError("dense layer expects B x " + std::to_string(in()) + " input, got " +
                     to_string(x.shape()));
  }
  Var z = ag::add_bias(ag::matmul(x, bind(weights)), bind(bias));
  return act == Activation::linear ? z : ag::activation(z, act);
}

void DenseLayer::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + "weights", &weights});
  out.push_back({prefix + "bias", &bias});
}

// ---------------------------------------------------------------------------- ConvLSTM

OGateSource parse_ogate_source(const std::string& name) {
  if (name == "cell") return OGateSource::cell;
  if (name == "hidden") return OGateSource::hidden;
  throw std::invalid_argument("unknown output-gate source '" + name + "' (expected cell, hidden)");
}

std::string to_string(OGateSource source) {
  return source == OGateSource::cell ? "cell" : "hidden";
}

ConvLSTMLayer ConvLSTMLayer::create(std::size_t in_channels, std::size_t filters,
                                    std::size_t kernel_h, std::size_t kernel_w, Rng& rng,
                                    OGateSource ogate) {
  ConvLSTMLayer layer = zeros(in_channels, filters, kernel_h, kernel_w, ogate);
  const std::size_t taps = kernel_h * kernel_w;
  auto input_kernel = [&] {
    return glorot_uniform(Shape{kernel_h, kernel_w, in_channels, filters}, taps * in_channels,
                          taps * filters, rng);
  };
  auto state_kernel = [&] {
    return glorot_uniform(Shape{kernel_h, kernel_w, filters, filters}, taps * filters,
                          taps * filters, rng);
  };
  layer.w_yi = input_kernel();
  layer.w_hi = state_kernel();
  layer.w_yf = input_kernel();
  layer.w_hf = state_kernel();
  layer.w_yc = input_kernel();
  layer.w_hc = state_kernel();
  layer.w_yo = input_kernel();
  layer.w_ho = state_kernel();
  layer.b_f = Tensor(Shape{filters}, 1.0);
  return layer;
}

ConvLSTMLayer ConvLSTMLayer::zeros(std::size_t in_channels, std::size_t filters,
                                   std::size_t kernel_h, std::size_t kernel_w, OGateSource ogate) {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw ShapeError("ConvLSTM kernel extents must be odd");
  }
  if (in_channels == 0 || filters == 0) throw ShapeError("ConvLSTM needs positive channel counts");
  ConvLSTMLayer layer;
  const Shape in_shape{kernel_h, kernel_w, in_channels, filters};
  const Shape state_shape{kernel_h, kernel_w, filters, filters};
  layer.w_yi = layer.w_yf = layer.w_yc = layer.w_yo = Tensor(in_shape);
  layer.w_hi = layer.w_hf = layer.w_hc = layer.w_ho = Tensor(state_shape);
  layer.b_i = layer.b_f = layer.b_c = layer.b_o = Tensor(Shape{filters});
  layer.ogate = ogate;
  return layer;
}

void ConvLSTMLayer::validate() const {
  const Shape in_shape{kernel_h(), kernel_w(), in_channels(), filters()};
  const Shape state_shape{kernel_h(), kernel_w(), filters(), filters()};
  for (const Tensor* k : {&w_yi, &w_yf, &w_yc, &w_yo}) {
    if (k->shape() != in_shape) throw ShapeError("ConvLSTM input kernel shape " + to_string(k->shape()));
  }
  for (const Tensor* k : {&w_hi, &w_hf, &w_hc, &w_ho}) {
    if (k->shape() != state_shape) throw ShapeError("ConvLSTM state kernel shape " + to_string(k->shape()));
  }
  for (const Tensor* b : {&b_i, &b_f, &b_c, &b_o}) {
    if (b->shape() != Shape{filters()}) throw ShapeError("ConvLSTM bias shape " + to_string(b->shape()));
  }
}

ConvLSTMStateVars ConvLSTMLayer::step(Binder& bind, Var input, const ConvLSTMStateVars& state) const {
  const Shape& in_shape = input.shape();
  const Shape& st_shape = state.h.shape();
  if (in_shape.size() != st_shape.size() || in_shape.size() < 3) {
    throw ShapeError("ConvLSTM step: input " + to_string(in_shape) + " and state " +
                     to_string(st_shape) + " ranks differ");
  }
  for (std::size_t axis = 0; axis + 1 < in_shape.size(); ++axis) {
    if (in_shape[axis] != st_shape[axis]) {
      throw ShapeError("ConvLSTM step: spatial mismatch on axis " + std::to_string(axis) +
                       " between input " + to_string(in_shape) + " and state " +
                       to_string(st_shape));
    }
  }
  if (st_shape.back() != filters() || state.c.shape() != st_shape) {
    throw ShapeError("ConvLSTM step: state must be [...] x " + std::to_string(filters()));
  }

  auto pre = [&](const Tensor& wy, const Tensor& wh, Var recurrent, const Tensor& b) {
    return ag::add_bias(ag::add(ag::conv2d(input, bind(wy)), ag::conv2d(recurrent, bind(wh))),
                        bind(b));
  };
  Var i = ag::sigmoid(pre(w_yi, w_hi, state.h, b_i));
  Var f = ag::sigmoid(pre(w_yf, w_hf, state.h, b_f));
  Var g = ag::tanh(pre(w_yc, w_hc, state.h, b_c));
  Var c_next = ag::add(ag::mul(f, state.c), ag::mul(i, g));
  Var o = ag::sigmoid(pre(w_yo, w_ho, ogate == OGateSource::cell ? state.c : state.h, b_o));
  Var h_next = ag::mul(o, ag::tanh(c_next));
  return {c_next, h_next};
}

void ConvLSTMLayer::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + "w_yi", &w_yi});
  out.push_back({prefix + "w_hi", &w_hi});
  out.push_back({prefix + "w_yf", &w_yf});
  out.push_back({prefix + "w_hf", &w_hf});
  out.push_back({prefix + "w_yc", &w_yc});
  out.push_back({prefix + "w_hc", &w_hc});
  out.push_back({prefix + "w_yo", &w_yo});
  out.push_back({prefix + "w_ho", &w_ho});
  out.push_back({prefix + "b_i", &b_i});
  out.push_back({prefix + "b_f", &b_f});
  out.push_back({prefix + "b_c", &b_c});
  out.push_back({prefix + "b_o", &b_o});
}

ConvLSTMState convlstm_step(const ConvLSTMLayer& layer, const Tensor& input,
                            const ConvLSTMState& state) {
  Tape tape;
  Binder bind(tape, false);
  ConvLSTMStateVars next =
      layer.step(bind, tape.constant(input), {tape.constant(state.c), tape.constant(state.h)});
  return {next.c.value(), next.h.value()};
}

namespace {

Tensor time_step(const Tensor& inputs, std::size_t t) {
  // inputs: B x L x M x N x C -> B x M x N x C at step t
  const std::size_t batch = inputs.dim(0), steps = inputs.dim(1);
  const std::size_t frame = inputs.size() / (batch * steps);
  Tensor out(Shape{batch, inputs.dim(2), inputs.dim(3), inputs.dim(4)});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto src = inputs.data().begin() + static_cast<std::ptrdiff_t>((b * steps + t) * frame);
    std::copy(src, src + static_cast<std::ptrdiff_t>(frame),
              out.data().begin() + static_cast<std::ptrdiff_t>(b * frame));
  }
  return out;
}

}  // namespace

Var convlstm_unroll(Binder& bind, const std::vector<ConvLSTMLayer>& stack, const Tensor& inputs,
                    double keep, DropoutContext& ctx) {
  if (stack.empty()) throw std::invalid_argument("convlstm_unroll: empty layer stack");
  if (inputs.rank() != 5) {
    throw ShapeError("convlstm_unroll: inputs must be B x L x M x N x C, got " +
                     to_string(inputs.shape()));
  }
  const std::size_t batch = inputs.dim(0), steps = inputs.dim(1);
  if (steps == 0 || batch == 0) throw std::invalid_argument("convlstm_unroll: empty sequence");
  if (inputs.dim(4) != stack.front().in_channels()) {
    throw ShapeError("convlstm_unroll: input channel axis has " + std::to_string(inputs.dim(4)) +
                     " channels, first layer expects " +
                     std::to_string(stack.front().in_channels()));
  }
  for (std::size_t l = 1; l < stack.size(); ++l) {
    if (stack[l].in_channels() != stack[l - 1].filters()) {
      throw ShapeError("convlstm_unroll: layer " + std::to_string(l) + " expects " +
                       std::to_string(stack[l].in_channels()) + " channels but layer " +
                       std::to_string(l - 1) + " produces " + std::to_string(stack[l - 1].filters()));
    }
  }

  Tape& tape = bind.tape();
  std::vector<ConvLSTMStateVars> states;
  for (const ConvLSTMLayer& layer : stack) {
    const Shape s{batch, inputs.dim(2), inputs.dim(3), layer.filters()};
    states.push_back({tape.constant(Tensor(s)), tape.constant(Tensor(s))});
  }
  for (std::size_t t = 0; t < steps; ++t) {
    Var x = tape.constant(time_step(inputs, t));
    for (std::size_t l = 0; l < stack.size(); ++l) {
      states[l] = stack[l].step(bind, x, states[l]);
      x = states[l].h;
      if (l + 1 < stack.size()) x = dropout(x, keep, ctx);
    }
  }
  return states.back().h;
}

Tensor convlstm_unroll(const std::vector<ConvLSTMLayer>& stack, const Tensor& inputs) {
  if (inputs.rank() != 4) {
    throw ShapeError("convlstm_unroll: inputs must be L x M x N x C, got " + to_string(inputs.shape()));
  }
  Shape batched = inputs.shape();
  batched.insert(batched.begin(), 1);
  Tape tape;
  Binder bind(tape, false);
  DropoutContext ctx;
  Var h = convlstm_unroll(bind, stack, inputs.reshaped(batched), 1.0, ctx);
  Shape out(h.shape().begin() + 1, h.shape().end());
  return h.value().reshaped(out);
}

// ---------------------------------------------------------------------------- multi-head

MultiHeadOutput MultiHeadOutput::create(std::size_t latent, std::size_t outputs, Rng& rng) {
  MultiHeadOutput head;
  head.weights = glorot_uniform(Shape{latent, outputs}, latent, outputs, rng);
  head.bias = Tensor(Shape{outputs});
  return head;
}

Var MultiHeadOutput::forward(Binder& bind, Var h) const {
  const Shape shape = h.shape();
  if (shape.empty() || shape.back() != latent()) {
    throw ShapeError("multi-head output: channel axis of " + to_string(shape) + " must equal " +
                     std::to_string(latent()));
  }
  const std::size_t rows = h.value().size() / latent();
  Var flat = ag::reshape(h, Shape{rows, latent()});
  Var out = ag::add_bias(ag::matmul(flat, bind(weights)), bind(bias));
  Shape out_shape = shape;
  out_shape.back() = outputs();
  return ag::reshape(out, out_shape);
}

void MultiHeadOutput::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + "weights", &weights});
  out.push_back({prefix + "bias", &bias});
}

ForecastBundle multihead_forward(const MultiHeadOutput& head, const Tensor& h) {
  Tape tape;
  Binder bind(tape, false);
  return split_heads(head.forward(bind, tape.constant(h)).value());
}

}  // namespace jmqr
