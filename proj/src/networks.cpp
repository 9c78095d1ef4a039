#include "jmqr/models.hpp"

#include <stdexcept>

namespace jmqr {

// ---------------------------------------------------------------------------- JointMLP

JointMLP::JointMLP(const MLPConfig& config, std::size_t outputs, Rng& rng) : config_(config) {
  if (outputs == 0) throw std::invalid_argument("JointMLP needs at least one output");
  if (!(config.keep > 0.0 && config.keep <= 1.0)) {
    throw std::invalid_argument("JointMLP keep probability must lie in (0, 1]");
  }
  std::size_t width = config.inputs;
  for (const HiddenSpec& h : config.hidden) {
    layers_.push_back(DenseLayer::create(width, h.units, h.act, rng));
    width = h.units;
  }
  layers_.push_back(DenseLayer::create(width, outputs, Activation::linear, rng));
}

std::vector<NamedParameter> JointMLP::parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect("dense" + std::to_string(i) + ".", out);
  }
  return out;
}

Var JointMLP::forward(Binder& bind, const Tensor& inputs, DropoutContext& ctx) const {
  Var x = bind.tape().constant(inputs);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(bind, x);
    if (i + 1 < layers_.size()) x = dropout(x, config_.keep, ctx);
  }
  return x;
}

nlohmann::json JointMLP::describe() const {
  nlohmann::json hidden = nlohmann::json::array();
  for (const HiddenSpec& h : config_.hidden) {
    hidden.push_back({{"units", h.units}, {"activation", to_string(h.act)}});
  }
  return {{"family", family()},
          {"inputs", config_.inputs},
          {"hidden", hidden},
          {"keep", config_.keep},
          {"outputs", outputs()}};
}

// ---------------------------------------------------------------------------- DeepJMQRNet

DeepJMQRNet::DeepJMQRNet(const ConvLSTMConfig& config, std::size_t outputs, Rng& rng)
    : config_(config) {
  if (config.filters.empty()) throw std::invalid_argument("DeepJMQRNet needs at least one ConvLSTM layer");
  if (outputs == 0) throw std::invalid_argument("DeepJMQRNet needs at least one output");
  if (!(config.keep > 0.0 && config.keep <= 1.0)) {
    throw std::invalid_argument("DeepJMQRNet keep probability must lie in (0, 1]");
  }
  std::size_t channels = config.in_channels;
  for (std::size_t s : config.filters) {
    stack_.push_back(ConvLSTMLayer::create(channels, s, config.kernel, config.kernel, rng, config.ogate));
    channels = s;
  }
  head_ = MultiHeadOutput::create(channels, outputs, rng);
}

std::vector<NamedParameter> DeepJMQRNet::parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < stack_.size(); ++i) {
    stack_[i].collect("convlstm" + std::to_string(i) + ".", out);
  }
  head_.collect("head.", out);
  return out;
}

Var DeepJMQRNet::forward(Binder& bind, const Tensor& inputs, DropoutContext& ctx) const {
  Var h = convlstm_unroll(bind, stack_, inputs, config_.keep, ctx);
  return head_.forward(bind, dropout(h, config_.keep, ctx));
}

nlohmann::json DeepJMQRNet::describe() const {
  return {{"family", family()},
          {"in_channels", config_.in_channels},
          {"filters", config_.filters},
          {"kernel", config_.kernel},
          {"ogate", to_string(config_.ogate)},
          {"keep", config_.keep},
          {"outputs", outputs()}};
}

// ---------------------------------------------------------------------------- LinearModel

LinearModel::LinearModel(std::size_t features, std::vector<std::size_t> kept_columns)
    : features_(features), kept_(std::move(kept_columns)),
      weights_(Shape{kept_.size(), 1}), intercept_(Shape{1}) {
  for (std::size_t c : kept_) {
    if (c >= features_) throw std::invalid_argument("LinearModel: kept column out of range");
  }
}

std::vector<NamedParameter> LinearModel::parameters() {
  return {{"weights", &weights_}, {"intercept", &intercept_}};
}

Var LinearModel::forward(Binder& bind, const Tensor& inputs, DropoutContext&) const {
  if (inputs.rank() != 2 || inputs.dim(1) != features_) {
    throw ShapeError("linear model expects N x " + std::to_string(features_) + " features, got " +
                     to_string(inputs.shape()));
  }
  const std::size_t n = inputs.dim(0);
  Tensor selected(Shape{n, kept_.size()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < kept_.size(); ++k) {
      selected[i * kept_.size() + k] = inputs[i * features_ + kept_[k]];
    }
  }
  Var x = bind.tape().constant(std::move(selected));
  return ag::add_bias(ag::matmul(x, bind(weights_)), bind(intercept_));
}

std::vector<double> LinearModel::weights() const {
  std::vector<double> out(features_, 0.0);
  for (std::size_t k = 0; k < kept_.size(); ++k) out[kept_[k]] = weights_[k];
  return out;
}

nlohmann::json LinearModel::describe() const {
  return {{"family", family()}, {"features", features_}, {"kept_columns", kept_}, {"outputs", 1}};
}

// ---------------------------------------------------------------------------- persistence

std::unique_ptr<Model> model_from_descriptor(const nlohmann::json& d) {
  const std::string family = d.at("family").get<std::string>();
  Rng rng(0);
  if (family == "mlp") {
    MLPConfig cfg;
    cfg.inputs = d.at("inputs").get<std::size_t>();
    cfg.keep = d.at("keep").get<double>();
    cfg.hidden.clear();
    for (const auto& h : d.at("hidden")) {
      cfg.hidden.push_back({h.at("units").get<std::size_t>(),
                            parse_activation(h.at("activation").get<std::string>())});
    }
    return std::make_unique<JointMLP>(cfg, d.at("outputs").get<std::size_t>(), rng);
  }
  if (family == "convlstm") {
    ConvLSTMConfig cfg;
    cfg.in_channels = d.at("in_channels").get<std::size_t>();
    cfg.filters = d.at("filters").get<std::vector<std::size_t>>();
    cfg.kernel = d.at("kernel").get<std::size_t>();
    cfg.ogate = parse_ogate_source(d.at("ogate").get<std::string>());
    cfg.keep = d.at("keep").get<double>();
    return std::make_unique<DeepJMQRNet>(cfg, d.at("outputs").get<std::size_t>(), rng);
  }
  if (family == "linear") {
    return std::make_unique<LinearModel>(d.at("features").get<std::size_t>(),
                                         d.at("kept_columns").get<std::vector<std::size_t>>());
  }
  throw std::invalid_argument("unknown model family '" + family + "'");
}

void load_parameters(Model& model, const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (const NamedParameter& p : model.parameters()) {
    const Tensor& stored = find_tensor(tensors, prefix + p.name);
    require_same_shape(*p.tensor, stored, ("loading " + prefix + p.name).c_str());
    *p.tensor = stored;
  }
}

void append_parameters(Model& model, const std::string& prefix, std::vector<NamedTensor>& out) {
  for (const NamedParameter& p : model.parameters()) out.push_back({prefix + p.name, *p.tensor});
}

}  // namespace jmqr
