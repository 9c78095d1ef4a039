#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "jmqr/models.hpp"

namespace jmqr {

MCMoments mc_moments(std::span<const Tensor> passes, double sigma2) {
  if (passes.size() < 2) throw std::invalid_argument("mc_moments: need at least two passes");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("mc_moments: sigma2 must be non-negative");
  const Tensor& first = passes.front();
  MCMoments out{Tensor(first.shape()), Tensor(first.shape(), 0.0)};
  const double count = static_cast<double>(passes.size());
  for (const Tensor& p : passes) {
    require_same_shape(first, p, "mc_moments");
    axpy(out.mean, 1.0 / count, p);
  }
  for (const Tensor& p : passes) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - out.mean[i];
      out.variance[i] += d * d / count;
    }
  }
  for (double& v : out.variance.data()) v += sigma2;
  return out;
}

namespace {

Tensor drop_channel_axis(const Tensor& t) {
  if (t.rank() == 0 || t.shape().back() != 1) {
    throw ShapeError("MC dropout network must have a single output, got " + to_string(t.shape()));
  }
  return t.reshaped(Shape(t.shape().begin(), t.shape().end() - 1));
}

std::vector<Tensor> mc_passes(const MCDropoutPredictor& p, const Tensor& inputs, Rng& rng) {
  if (!p.network) throw std::invalid_argument("mc_predict: predictor has no network");
  if (p.samples < 2) throw std::invalid_argument("mc_predict: need at least two MC samples");
  std::vector<Tensor> passes;
  passes.reserve(p.samples);
  for (std::size_t s = 0; s < p.samples; ++s) {
    passes.push_back(drop_channel_axis(p.network->predict_stochastic(inputs, rng)));
  }
  return passes;
}

}  // namespace

MCMoments mc_predict(const MCDropoutPredictor& predictor, const Tensor& inputs, Rng& rng) {
  return mc_moments(mc_passes(predictor, inputs, rng), predictor.sigma2);
}

double calibrate_sigma_zhu(const Tensor& targets, const Tensor& predictions) {
  require_same_shape(targets, predictions, "calibrate_sigma_zhu");
  if (targets.empty()) throw std::invalid_argument("calibrate_sigma_zhu: empty validation set");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = targets[i] - predictions[i];
    total += r * r;
  }
  return total / static_cast<double>(targets.size());
}

double calibrate_sigma_gal(const Tensor& targets, const Tensor& mc_mean, const Tensor& mc_spread,
                           std::span<const double> grid) {
  require_same_shape(targets, mc_mean, "calibrate_sigma_gal");
  require_same_shape(targets, mc_spread, "calibrate_sigma_gal");
  if (grid.empty()) throw std::invalid_argument("calibrate_sigma_gal: empty candidate grid");
  if (targets.empty()) throw std::invalid_argument("calibrate_sigma_gal: empty validation set");
  double best_value = grid.front();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (double sigma2 : grid) {
    double ll = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double v = mc_spread[i] + sigma2;
      if (!(v > 0.0)) {
        ll = -std::numeric_limits<double>::infinity();
        break;
      }
      const double r = targets[i] - mc_mean[i];
      ll += -0.5 * (std::log(2.0 * std::numbers::pi * v) + r * r / v);
    }
    if (ll > best_ll) {
      best_ll = ll;
      best_value = sigma2;
    }
  }
  return best_value;
}

double calibrate_sigma_gal(const MCDropoutPredictor& predictor, const SupervisedSet& val_set,
                           std::span<const double> grid, Rng& rng) {
  MCMoments m = mc_moments(mc_passes(predictor, val_set.inputs, rng), 0.0);
  return calibrate_sigma_gal(val_set.targets, m.mean, m.variance, grid);
}

std::vector<double> gal_grid(double target_variance, std::size_t count) {
  if (!(target_variance > 0.0)) throw std::invalid_argument("gal_grid: variance must be positive");
  if (count == 0) throw std::invalid_argument("gal_grid: empty grid");
  std::vector<double> grid;
  const double lo = std::log(1e-4), hi = std::log(1e2);
  for (std::size_t k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    grid.push_back(target_variance * std::exp(lo + frac * (hi - lo)));
  }
  return grid;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  double lo = -40.0, hi = 40.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

ForecastBundle gaussian_quantiles(const Tensor& mean, const Tensor& variance,
                                  const QuantileLevels& levels) {
  require_same_shape(mean, variance, "gaussian_quantiles");
  for (double v : variance.data()) {
    if (v < 0.0) throw std::invalid_argument("gaussian_quantiles: negative variance");
  }
  std::vector<double> z;
  for (double tau : levels) z.push_back(normal_quantile(tau));
  const std::size_t count = levels.size();
  ForecastBundle bundle;
  bundle.mean = mean;
  Shape qshape = mean.shape();
  qshape.push_back(count);
  bundle.quantiles = Tensor(qshape);
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double sd = std::sqrt(variance[i]);
    for (std::size_t j = 0; j < count; ++j) bundle.quantiles[i * count + j] = mean[i] + z[j] * sd;
  }
  return bundle;
}

}  // namespace jmqr
