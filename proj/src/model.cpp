#include "jmqr/model.hpp"

#include <algorithm>

namespace jmqr {

SupervisedSet SupervisedSet::subset(std::span<const std::size_t> rows) const {
  return {inputs.gather_rows(rows), targets.gather_rows(rows)};
}

namespace {

Tensor run_chunked(const Model& model, const Tensor& inputs, std::size_t chunk,
                   DropoutContext& ctx) {
  if (inputs.rank() == 0) throw ShapeError("predict: inputs need a sample axis");
  const std::size_t n = inputs.dim(0);
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<double> values;
  Shape out_shape;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    Tape tape;
    Binder bind(tape, false);
    Var out = model.forward(bind, inputs.slice_rows(begin, end), ctx);
    if (out_shape.empty()) out_shape = out.shape();
    values.insert(values.end(), out.value().data().begin(), out.value().data().end());
  }
  if (out_shape.empty()) return Tensor();
  out_shape[0] = n;
  return Tensor(std::move(out_shape), std::move(values));
}

}  // namespace

Tensor Model::predict(const Tensor& inputs, std::size_t chunk) const {
  DropoutContext ctx;
  return run_chunked(*this, inputs, chunk, ctx);
}

Tensor Model::predict_stochastic(const Tensor& inputs, Rng& rng, std::size_t chunk) const {
  DropoutContext ctx{DropoutMode::mc, &rng};
  return run_chunked(*this, inputs, chunk, ctx);
}

std::vector<Tensor> Model::snapshot() {
  std::vector<Tensor> values;
  for (const NamedParameter& p : parameters()) values.push_back(*p.tensor);
  return values;
}

void Model::restore(const std::vector<Tensor>& values) {
  auto params = parameters();
  if (params.size() != values.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i].tensor, values[i], "restore");
    *params[i].tensor = values[i];
  }
}

}  // namespace jmqr
