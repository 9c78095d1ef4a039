#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "jmqr/autograd.hpp"
#include "jmqr/forecast.hpp"
#include "jmqr/rng.hpp"
#include "jmqr/tensor.hpp"

namespace jmqr {

/// A parameter tensor together with the name it is serialized under.
struct NamedParameter {
  std::string name;
  Tensor* tensor;
};

/// Glorot-uniform fill with limit sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// --------------------------------------------------------------------------------------------
// Dropout

enum class DropoutMode { train, mc, eval };

/// Inverted dropout: kept elements are scaled by 1/keep so evaluation is the identity.
Tensor dropout(const Tensor& x, double keep, DropoutMode mode, Rng& rng);
/// Draws the scaled Bernoulli mask used by dropout.
Tensor dropout_mask(const Shape& shape, double keep, Rng& rng);

/// Carries the dropout regime through a forward pass.
struct DropoutContext {
  DropoutMode mode = DropoutMode::eval;
  Rng* rng = nullptr;

  bool active(double keep) const { return mode != DropoutMode::eval && keep < 1.0; }
};

Var dropout(Var x, double keep, DropoutContext& ctx);

// --------------------------------------------------------------------------------------------
// Dense

struct DenseLayer {
  Tensor weights;  // in x out
  Tensor bias;     // out
  Activation act = Activation::linear;

  static DenseLayer create(std::size_t in, std::size_t out, Activation act, Rng& rng);

  std::size_t in() const { return weights.dim(0); }
  std::size_t out() const { return weights.dim(1); }

  /// x: B x in -> B x out
  Var forward(Binder& bind, Var x) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

// --------------------------------------------------------------------------------------------
// ConvLSTM

/// Which tensor feeds the output-gate recurrent convolution.
/// `cell` uses the prior cell tensor C_{t-1}; `hidden` uses H_{t-1}.
enum class OGateSource { cell, hidden };

OGateSource parse_ogate_source(const std::string& name);
std::string to_string(OGateSource source);

struct ConvLSTMState {
  Tensor c;
  Tensor h;
};

struct ConvLSTMStateVars {
  Var c;
  Var h;
};

/// ConvLSTM without peephole connections:
///   i  = sigmoid(W_yi * Y + W_hi * H + b_i)
///   f  = sigmoid(W_yf * Y + W_hf * H + b_f)
///   C' = f . C + i . tanh(W_yc * Y + W_hc * H + b_c)
///   o  = sigmoid(W_yo * Y + W_ho * C + b_o)      (H instead of C with OGateSource::hidden)
///   H' = o . tanh(C')
struct ConvLSTMLayer {
  Tensor w_yi, w_hi, w_yf, w_hf, w_yc, w_hc, w_yo, w_ho;
  Tensor b_i, b_f, b_c, b_o;
  OGateSource ogate = OGateSource::cell;

  /// Glorot kernels, forget bias 1, other biases 0.
  static ConvLSTMLayer create(std::size_t in_channels, std::size_t filters, std::size_t kernel_h,
                              std::size_t kernel_w, Rng& rng, OGateSource ogate = OGateSource::cell);
  /// All kernels and biases zero.
  static ConvLSTMLayer zeros(std::size_t in_channels, std::size_t filters, std::size_t kernel_h,
                             std::size_t kernel_w, OGateSource ogate = OGateSource::cell);

  std::size_t in_channels() const { return w_yi.dim(2); }
  std::size_t filters() const { return w_yi.dim(3); }
  std::size_t kernel_h() const { return w_yi.dim(0); }
  std::size_t kernel_w() const { return w_yi.dim(1); }

  /// input: [B x] M x N x Cin; state tensors: [B x] M x N x S.
  ConvLSTMStateVars step(Binder& bind, Var input, const ConvLSTMStateVars& state) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
  void validate() const;
};

/// One ConvLSTM transition on plain tensors.
ConvLSTMState convlstm_step(const ConvLSTMLayer& layer, const Tensor& input,
                            const ConvLSTMState& state);

/// Runs a stack over inputs L x M x N x Cin from zero states and returns the last layer's
/// hidden tensor at the final step (M x N x S).
Tensor convlstm_unroll(const std::vector<ConvLSTMLayer>& stack, const Tensor& inputs);

/// Batched, differentiable unroll. inputs: B x L x M x N x Cin (constant).
/// Dropout with the given keep rate is applied to each layer's hidden output before it feeds
/// the next layer.
Var convlstm_unroll(Binder& bind, const std::vector<ConvLSTMLayer>& stack, const Tensor& inputs,
                    double keep, DropoutContext& ctx);

// --------------------------------------------------------------------------------------------
// Shared multi-head output

/// Per-cell linear map from the S latent channels to (mean, q_1, ..., q_J), shared across all
/// grid cells (a 1x1 convolution).
struct MultiHeadOutput {
  Tensor weights;  // S x (1 + J)
  Tensor bias;     // 1 + J

  static MultiHeadOutput create(std::size_t latent, std::size_t outputs, Rng& rng);

  std::size_t latent() const { return weights.dim(0); }
  std::size_t outputs() const { return weights.dim(1); }

  /// h: [...] x S -> [...] x (1 + J)
  Var forward(Binder& bind, Var h) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

/// Applies the head to a latent tensor M x N x S (or any [...] x S).
ForecastBundle multihead_forward(const MultiHeadOutput& head, const Tensor& h);

}  // namespace jmqr
