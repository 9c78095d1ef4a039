#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmqr/forecast.hpp"
#include "jmqr/layers.hpp"
#include "jmqr/losses.hpp"
#include "jmqr/model.hpp"
#include "jmqr/optim.hpp"
#include "jmqr/tensor_io.hpp"

namespace jmqr {

// ============================================================================================
// Networks

struct HiddenSpec {
  std::size_t units = 0;
  Activation act = Activation::linear;
};

struct MLPConfig {
  std::size_t inputs = 1;
  std::vector<HiddenSpec> hidden{{50, Activation::tanh}, {10, Activation::linear}};
  /// Dropout keep probability applied after every hidden layer; 1 disables dropout.
  double keep = 1.0;
};

/// Dense stack inputs -> hidden... -> outputs (linear). Inputs B x F, outputs B x K.
class JointMLP final : public Model {
 public:
  JointMLP(const MLPConfig& config, std::size_t outputs, Rng& rng);

  std::string family() const override { return "mlp"; }
  std::size_t outputs() const override { return layers_.back().out(); }
  std::vector<NamedParameter> parameters() override;
  Var forward(Binder& bind, const Tensor& inputs, DropoutContext& ctx) const override;
  nlohmann::json describe() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<JointMLP>(*this); }

  const MLPConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  MLPConfig config_;
  std::vector<DenseLayer> layers_;
};

struct ConvLSTMConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> filters{16};
  std::size_t kernel = 3;
  OGateSource ogate = OGateSource::cell;
  /// Dropout keep probability between layers and before the head.
  double keep = 0.8;
};

/// Stacked ConvLSTM layers, dropout between layers and a shared per-cell multi-head output.
/// Inputs B x L x M x N x C, outputs B x M x N x K.
class DeepJMQRNet final : public Model {
 public:
  DeepJMQRNet(const ConvLSTMConfig& config, std::size_t outputs, Rng& rng);

  std::string family() const override { return "convlstm"; }
  std::size_t outputs() const override { return head_.outputs(); }
  std::vector<NamedParameter> parameters() override;
  Var forward(Binder& bind, const Tensor& inputs, DropoutContext& ctx) const override;
  nlohmann::json describe() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<DeepJMQRNet>(*this); }

  const ConvLSTMConfig& config() const { return config_; }
  const std::vector<ConvLSTMLayer>& stack() const { return stack_; }
  const MultiHeadOutput& head() const { return head_; }

 private:
  ConvLSTMConfig config_;
  std::vector<ConvLSTMLayer> stack_;
  MultiHeadOutput head_;
};

/// Linear predictor over flattened features with an intercept, for one task.
/// Inputs B x F, outputs B x 1. Columns found constant at fit time are ignored.
class LinearModel final : public Model {
 public:
  LinearModel(std::size_t features, std::vector<std::size_t> kept_columns);

  std::string family() const override { return "linear"; }
  std::size_t outputs() const override { return 1; }
  std::vector<NamedParameter> parameters() override;
  Var forward(Binder& bind, const Tensor& inputs, DropoutContext& ctx) const override;
  nlohmann::json describe() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<LinearModel>(*this); }

  std::size_t features() const { return features_; }
  const std::vector<std::size_t>& kept_columns() const { return kept_; }
  /// Weight per original feature column (0 for dropped columns).
  std::vector<double> weights() const;
  double intercept() const { return intercept_[0]; }

 private:
  std::size_t features_;
  std::vector<std::size_t> kept_;
  Tensor weights_;    // kept x 1
  Tensor intercept_;  // 1
};

/// Rebuilds an untrained model from a descriptor produced by Model::describe().
std::unique_ptr<Model> model_from_descriptor(const nlohmann::json& descriptor);

/// Copies named parameter values from a container; names are `prefix + parameter name`.
void load_parameters(Model& model, const std::vector<NamedTensor>& tensors,
                     const std::string& prefix = "");
void append_parameters(Model& model, const std::string& prefix, std::vector<NamedTensor>& out);

// ============================================================================================
// Fitting

/// Trains a single model with 1 + J heads on the joint objective.
TrainResult fit_joint(Model& model, const SupervisedSet& train_set, const SupervisedSet* val_set,
                      const QuantileLevels& levels, const TrainConfig& cfg);

struct IndependentMember {
  Task task;
  std::unique_ptr<Model> model;
  TrainResult result;
};

/// Builds the single-output model for task index k (0 = mean, k = level k - 1).
using ModelFactory = std::function<std::unique_ptr<Model>(std::size_t task_index)>;

/// Seed used for task index k. Index 0 (the mean model) shares the joint model's seed, so a
/// joint fit with no levels and the independent mean model are the same estimator.
std::uint64_t member_seed(std::uint64_t seed, std::size_t task_index);

/// Trains one l2 model plus one pinball model per level, each on its own loss only.
std::vector<IndependentMember> fit_independent(const ModelFactory& factory,
                                               const SupervisedSet& train_set,
                                               const SupervisedSet* val_set,
                                               const QuantileLevels& levels,
                                               const TrainConfig& cfg);

/// Stacks B x [cells] x 1 outputs ordered (mean, q_1, ..., q_J) into a forecast bundle.
ForecastBundle stack_member_outputs(const std::vector<Tensor>& outputs);

/// Stacks the members' B x [cells] x 1 predictions into a forecast bundle.
ForecastBundle predict_independent(const std::vector<IndependentMember>& members,
                                   const Tensor& inputs);

/// Fits a linear predictor (l2 for the mean task, pinball for quantile tasks) with Adam.
/// Expects standardized features (N x F) and targets (N); constant columns are dropped with a
/// warning on stderr.
LinearModel fit_linear_qr(const SupervisedSet& train_set, const Task& task, const TrainConfig& cfg,
                          std::vector<std::string>* warnings = nullptr,
                          TrainResult* result = nullptr);

// ============================================================================================
// MC dropout baseline

struct MCDropoutPredictor {
  std::shared_ptr<const Model> network;  // mean-only network with dropout layers
  std::size_t samples = 100;
  double sigma2 = 0.0;
};

struct MCMoments {
  Tensor mean;      // E-hat
  Tensor variance;  // V-hat = sigma2 + spread
};

/// Moments of a set of stochastic passes: mean and sigma2 + (1/S) sum (pass - mean)^2.
MCMoments mc_moments(std::span<const Tensor> passes, double sigma2);

/// Runs `samples` dropout-active passes (masks drawn sequentially from rng).
/// Outputs drop the trailing single-channel axis: shape N x [cells].
MCMoments mc_predict(const MCDropoutPredictor& predictor, const Tensor& inputs, Rng& rng);

/// Mean squared residual on a validation set.
double calibrate_sigma_zhu(const Tensor& targets, const Tensor& predictions);

/// The grid value maximizing sum_i log N(y_i | E_i, spread_i + sigma2); first maximum wins.
double calibrate_sigma_gal(const Tensor& targets, const Tensor& mc_mean, const Tensor& mc_spread,
                           std::span<const double> grid);
double calibrate_sigma_gal(const MCDropoutPredictor& predictor, const SupervisedSet& val_set,
                           std::span<const double> grid, Rng& rng);

/// `count` log-spaced candidates spanning [1e-4, 1e2] * target_variance.
std::vector<double> gal_grid(double target_variance, std::size_t count = 30);

double normal_cdf(double x);
/// Inverse standard normal CDF by bisection on normal_cdf to 1e-10.
double normal_quantile(double p);

/// q_tau = E + z_tau sqrt(V) for each level.
ForecastBundle gaussian_quantiles(const Tensor& mean, const Tensor& variance,
                                  const QuantileLevels& levels);

}  // namespace jmqr
