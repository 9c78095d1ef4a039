#include "jmqr/forecast.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace jmqr {

QuantileLevels::QuantileLevels(std::vector<double> levels) : levels_(std::move(levels)) {
  for (std::size_t j = 0; j < levels_.size(); ++j) {
    const double tau = levels_[j];
    if (!(tau > 0.0 && tau < 1.0)) {
      throw std::invalid_argument("quantile level " + std::to_string(tau) + " outside (0, 1)");
    }
    if (j > 0 && !(tau > levels_[j - 1])) {
      throw std::invalid_argument("quantile levels must be strictly increasing");
    }
  }
}

QuantileLevels QuantileLevels::parse(const std::string& csv) {
  std::vector<double> values;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse quantile level '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) {
      throw std::invalid_argument("cannot parse quantile level '" + item + "'");
    }
    values.push_back(v);
  }
  return QuantileLevels(std::move(values));
}

std::size_t QuantileLevels::index_of(double tau) const {
  for (std::size_t j = 0; j < levels_.size(); ++j) {
    if (std::abs(levels_[j] - tau) < 1e-9) return j;
  }
  throw std::invalid_argument("quantile level " + std::to_string(tau) + " is not modeled");
}

Tensor ForecastBundle::quantile(std::size_t j) const {
  const std::size_t count = levels();
  if (j >= count) throw std::out_of_range("quantile index out of range");
  Tensor out(mean.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantiles[i * count + j];
  return out;
}

void ForecastBundle::validate(std::size_t expected_levels) const {
  if (levels() != expected_levels) {
    throw ShapeError("forecast bundle has " + std::to_string(levels()) + " quantile channels, " +
                     std::to_string(expected_levels) + " levels expected");
  }
  if (expected_levels == 0) return;
  Shape spatial(quantiles.shape().begin(), quantiles.shape().end() - 1);
  if (spatial != mean.shape()) {
    throw ShapeError("forecast bundle mean " + to_string(mean.shape()) +
                     " does not align with quantiles " + to_string(quantiles.shape()));
  }
}

ForecastBundle split_heads(const Tensor& outputs) {
  if (outputs.rank() == 0 || outputs.shape().back() == 0) {
    throw ShapeError("head output needs a non-empty last axis, got " + to_string(outputs.shape()));
  }
  const std::size_t width = outputs.shape().back();
  const std::size_t levels = width - 1;
  Shape spatial(outputs.shape().begin(), outputs.shape().end() - 1);
  ForecastBundle bundle;
  bundle.mean = Tensor(spatial);
  Shape qshape = spatial;
  qshape.push_back(levels);
  bundle.quantiles = Tensor(qshape);
  for (std::size_t i = 0; i < bundle.mean.size(); ++i) {
    bundle.mean[i] = outputs[i * width];
    for (std::size_t j = 0; j < levels; ++j) {
      bundle.quantiles[i * levels + j] = outputs[i * width + 1 + j];
    }
  }
  return bundle;
}

}  // namespace jmqr
