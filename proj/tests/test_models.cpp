#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "jmqr/models.hpp"
#include "support.hpp"

using namespace jmqr;
using testing_support::max_abs_diff;
using testing_support::random_tensor;

namespace {

double oracle_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double oracle_quantile(double p) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oracle_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Solves A x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t c = n; c-- > 0;) {
    double acc = b[c];
    for (std::size_t k = c + 1; k < n; ++k) acc -= a[c][k] * x[k];
    x[c] = acc / a[c][c];
  }
  return x;
}

SupervisedSet heteroscedastic(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SupervisedSet s{Tensor({n, 1}), Tensor({n})};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-2, 2);
    s.inputs[i] = x;
    s.targets[i] = 0.5 * x + (0.2 + 0.5 * std::abs(x)) * rng.normal();
  }
  return s;
}

double pinball_sum(const Tensor& ys, double tau, double c) {
  double total = 0.0;
  for (double y : ys.values()) total += std::max(tau * (y - c), (tau - 1) * (y - c));
  return total;
}

}  // namespace

TEST_CASE("joint network arity") {
  Rng rng(1);
  QuantileLevels levels{0.05, 0.2, 0.8, 0.95};
  JointMLP mlp(MLPConfig{}, 1 + levels.size(), rng);
  CHECK(mlp.outputs() == 5);
  CHECK(mlp.predict(random_tensor({7, 1}, rng)).shape() == Shape{7, 5});
  REQUIRE(mlp.layers().size() == 3);
  CHECK(mlp.layers()[0].out() == 50);
  CHECK(mlp.layers()[0].act == Activation::tanh);
  CHECK(mlp.layers()[1].out() == 10);
  CHECK(mlp.layers()[1].act == Activation::linear);

  ConvLSTMConfig cc;
  cc.filters = {4, 3};
  DeepJMQRNet net(cc, 5, rng);
  CHECK(net.head().latent() == 3);
  CHECK(net.stack()[1].in_channels() == 4);
  CHECK(net.predict(random_tensor({2, 3, 4, 4, 1}, rng)).shape() == Shape{2, 4, 4, 5});

  JointMLP wrong(MLPConfig{}, 3, rng);
  SupervisedSet data = heteroscedastic(10, 1);
  CHECK_THROWS(fit_joint(wrong, data, nullptr, levels, TrainConfig{}));
}

TEST_CASE("descriptors and weights rebuild the same predictor") {
  Rng rng(2);
  ConvLSTMConfig cc;
  cc.filters = {3};
  cc.ogate = OGateSource::hidden;
  std::vector<std::unique_ptr<Model>> models;
  models.push_back(std::make_unique<JointMLP>(MLPConfig{}, 3, rng));
  models.push_back(std::make_unique<DeepJMQRNet>(cc, 3, rng));
  models.push_back(std::make_unique<LinearModel>(4, std::vector<std::size_t>{0, 2, 3}));
  std::vector<Tensor> inputs{random_tensor({5, 1}, rng), random_tensor({2, 3, 3, 3, 1}, rng),
                             random_tensor({5, 4}, rng)};
  for (std::size_t k = 0; k < models.size(); ++k) {
    for (NamedParameter& p : models[k]->parameters()) *p.tensor = random_tensor(p.tensor->shape(), rng);
    std::vector<NamedTensor> saved;
    append_parameters(*models[k], "m.", saved);
    std::unique_ptr<Model> back = model_from_descriptor(models[k]->describe());
    load_parameters(*back, saved, "m.");
    CHECK(back->describe() == models[k]->describe());
    CHECK(back->predict(inputs[k]) == models[k]->predict(inputs[k]));
    CHECK_THROWS(load_parameters(*back, saved, "other."));
  }
  CHECK_THROWS(model_from_descriptor(nlohmann::json{{"family", "rkhs"}}));
}

TEST_CASE("joint quantile heads order a heteroscedastic sample") {
  SupervisedSet train_set = heteroscedastic(600, 3), test_set = heteroscedastic(400, 4);
  Rng rng(5);
  QuantileLevels levels{0.05, 0.95};
  JointMLP model(MLPConfig{}, 3, rng);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 3e-3;
  fit_joint(model, train_set, nullptr, levels, cfg);
  ForecastBundle b = split_heads(model.predict(test_set.inputs));
  std::size_t ordered = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) ordered += b.quantiles.at({i, 1}) > b.quantiles.at({i, 0});
  CHECK(ordered >= 0.99 * test_set.size());
}

TEST_CASE("independent members: one per task, each on its own loss") {
  SupervisedSet data = heteroscedastic(64, 6);
  QuantileLevels levels{0.3};
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 4;
  auto factory = [](std::size_t k) {
    Rng rng(member_seed(17, k));
    return std::make_unique<JointMLP>(MLPConfig{}, 1, rng);
  };
  std::vector<IndependentMember> members = fit_independent(factory, data, &data, levels, cfg);
  REQUIRE(members.size() == 2);
  CHECK(members[0].task.kind == Task::Kind::mean);
  CHECK(members[1].task.kind == Task::Kind::quantile);
  CHECK(members[1].task.tau == 0.3);

  // validation losses are recorded with the member's own objective
  Tensor out = members[1].model->predict(data.inputs);
  double expect = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = data.targets[i] - out[i];
    expect += std::max(0.3 * r, -0.7 * r);
  }
  expect /= data.size();
  CHECK(members[1].result.best_val_loss <= members[1].result.history.back().val_loss);
  const Task own[1] = {members[1].task};
  CHECK(task_loss_value(out, data.targets, own) == doctest::Approx(expect).epsilon(1e-12));

  ForecastBundle b = predict_independent(members, data.inputs);
  CHECK(b.levels() == 1);
  CHECK(b.mean == members[0].model->predict(data.inputs).reshaped({64}));
}

TEST_CASE("a joint fit without levels is the independent mean model") {
  SupervisedSet data = heteroscedastic(50, 7);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 3;
  const std::uint64_t init_seed = 41;
  Rng rng(init_seed);
  MLPConfig mc;
  mc.keep = 0.9;
  JointMLP joint(mc, 1, rng);
  fit_joint(joint, data, nullptr, QuantileLevels{}, cfg);
  auto factory = [&](std::size_t k) {
    Rng member_rng(member_seed(init_seed, k));
    return std::make_unique<JointMLP>(mc, 1, member_rng);
  };
  std::vector<IndependentMember> members = fit_independent(factory, data, nullptr, QuantileLevels{0.5}, cfg);
  CHECK(members[0].model->snapshot() == joint.snapshot());
}

TEST_CASE("linear fit recovers an exact linear map") {
  Rng rng(8);
  const std::size_t n = 200, f = 3;
  const std::vector<double> w{0.7, -1.3, 0.25};
  const double b = 0.4;
  SupervisedSet data{random_tensor({n, f}, rng, -1.7, 1.7), Tensor({n})};
  for (std::size_t i = 0; i < n; ++i) {
    data.targets[i] = b;
    for (std::size_t c = 0; c < f; ++c) data.targets[i] += w[c] * data.inputs[i * f + c];
  }
  // least squares on [x, 1]
  std::vector<std::vector<double>> ata(f + 1, std::vector<double>(f + 1, 0.0));
  std::vector<double> aty(f + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(data.inputs.values().begin() + i * f, data.inputs.values().begin() + (i + 1) * f);
    row.push_back(1.0);
    for (std::size_t r = 0; r <= f; ++r) {
      aty[r] += row[r] * data.targets[i];
      for (std::size_t c = 0; c <= f; ++c) ata[r][c] += row[r] * row[c];
    }
  }
  std::vector<double> ls = solve(ata, aty);

  TrainConfig cfg;
  cfg.epochs = 3000;
  cfg.batch_size = n;
  cfg.learning_rate = 1e-2;
  LinearModel model = fit_linear_qr(data, Task::mean(), cfg);
  std::vector<double> got = model.weights();
  for (std::size_t c = 0; c < f; ++c) CHECK(std::abs(got[c] - ls[c]) < 1e-3);
  CHECK(std::abs(model.intercept() - ls[f]) < 1e-3);
  CHECK(model.features() == f);
  CHECK_THROWS(model.predict(random_tensor({2, 4}, rng)));
}

TEST_CASE("intercept-only linear quantile fits land on empirical quantiles") {
  Rng rng(9);
  for (double tau : {0.5, 0.9}) {
    const std::size_t n = 101;
    SupervisedSet data{Tensor({n, 2}), Tensor({n})};
    for (std::size_t i = 0; i < n; ++i) {
      data.inputs[2 * i] = 1.0;
      data.inputs[2 * i + 1] = -2.0;
      data.targets[i] = rng.normal();
    }
    std::vector<std::string> warnings;
    TrainConfig cfg;
    cfg.epochs = 5000;
    cfg.batch_size = n;
    cfg.learning_rate = 1e-3;
    LinearModel model = fit_linear_qr(data, Task::quantile(tau), cfg, &warnings);
    CHECK(warnings.size() == 2);
    CHECK(model.kept_columns().empty());

    // grid-search oracle over the pinball sum
    const double step = 1e-4;
    double best = INFINITY;
    std::vector<double> argmins;
    for (double c = -4; c <= 4; c += step) {
      const double v = pinball_sum(data.targets, tau, c);
      if (v < best - 1e-12) {
        best = v;
        argmins = {c};
      } else if (std::abs(v - best) <= 1e-12) {
        argmins.push_back(c);
      }
    }
    // Adam keeps hovering within about one learning rate of the kink
    const double slack = 2 * step + cfg.learning_rate;
    const double lo = argmins.front() - slack, hi = argmins.back() + slack;
    CHECK(model.intercept() >= lo);
    CHECK(model.intercept() <= hi);
  }
}

TEST_CASE("MC moments") {
  std::vector<Tensor> passes{Tensor::vector({0.0}), Tensor::vector({2.0})};
  MCMoments m = mc_moments(passes, 1.0);
  CHECK(m.mean[0] == 1.0);
  CHECK(m.variance[0] == 2.0);

  std::vector<Tensor> same{Tensor::vector({3.0, -1.0}), Tensor::vector({3.0, -1.0})};
  MCMoments z = mc_moments(same, 0.0);
  CHECK(z.variance.values() == std::vector<double>{0.0, 0.0});
  CHECK_THROWS(mc_moments(std::vector<Tensor>{Tensor::vector({1.0})}, 0.0));
  CHECK_THROWS(mc_moments(passes, -1.0));

  Rng rng(10);
  std::vector<Tensor> many;
  for (int s = 0; s < 30; ++s) many.push_back(random_tensor({4}, rng));
  MCMoments a = mc_moments(many, 0.3);
  std::reverse(many.begin(), many.end());
  MCMoments b = mc_moments(many, 0.3);
  CHECK(max_abs_diff(a.mean, b.mean) < 1e-15);
  for (double v : a.variance.values()) CHECK(v >= 0.3);
}

TEST_CASE("MC predictions without dropout have no spread") {
  Rng rng(11);
  auto net = std::make_shared<JointMLP>(MLPConfig{}, 1, rng);
  MCDropoutPredictor p{net, 10, 0.25};
  Tensor x = random_tensor({6, 1}, rng);
  Rng mc_rng(1);
  MCMoments m = mc_predict(p, x, mc_rng);
  CHECK(m.mean.shape() == Shape{6});
  for (double v : m.variance.values()) CHECK(v == 0.25);
  CHECK(max_abs_diff(m.mean, net->predict(x).reshaped({6})) < 1e-12);

  MLPConfig dropped;
  dropped.keep = 0.5;
  MCDropoutPredictor q{std::make_shared<JointMLP>(dropped, 1, rng), 20, 0.1};
  MCMoments n = mc_predict(q, x, mc_rng);
  for (double v : n.variance.values()) CHECK(v >= 0.1);
  CHECK(*std::max_element(n.variance.values().begin(), n.variance.values().end()) > 0.1);
  q.samples = 1;
  CHECK_THROWS(mc_predict(q, x, mc_rng));
}

TEST_CASE("Zhu calibration") {
  Tensor y = Tensor::vector({1.0, 2.0});
  CHECK(calibrate_sigma_zhu(y, y) == 0.0);
  CHECK(calibrate_sigma_zhu(Tensor::vector({1.0, -1.0}), Tensor::vector({0.0, 0.0})) == 1.0);
  Rng rng(12);
  Tensor a = random_tensor({50}, rng), b = random_tensor({50}, rng);
  double expect = 0.0;
  for (std::size_t i = 0; i < 50; ++i) expect += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(std::abs(calibrate_sigma_zhu(a, b) - expect / 50) < 1e-12);
  CHECK_THROWS(calibrate_sigma_zhu(Tensor({0}), Tensor({0})));
}

TEST_CASE("Gal calibration") {
  Rng rng(13);
  const std::size_t n = 2000;
  Tensor y({n}), mean({n}), spread({n});
  for (double& v : y.data()) v = rng.normal();
  std::vector<double> one{0.7};
  CHECK(calibrate_sigma_gal(y, mean, spread, one) == 0.7);

  std::vector<double> grid = gal_grid(1.0);
  REQUIRE(grid.size() == 30);
  CHECK(grid.front() == doctest::Approx(1e-4));
  CHECK(grid.back() == doctest::Approx(1e2));
  const double chosen = calibrate_sigma_gal(y, mean, spread, grid);

  auto loglik = [&](double s2) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += -0.5 * std::log(2 * M_PI * s2) - 0.5 * y[i] * y[i] / s2;
    return total;
  };
  double fine_best = 0, fine_ll = -INFINITY;
  for (int k = 0; k <= 6000; ++k) {
    const double s2 = 1e-4 * std::pow(1e6, k / 6000.0);
    const double ll = loglik(s2);
    if (ll > fine_ll) fine_ll = ll, fine_best = s2;
  }
  const double ratio = grid[1] / grid[0];
  CHECK(chosen / fine_best < ratio);
  CHECK(fine_best / chosen < ratio);

  // spread so large that sigma2 is irrelevant: every grid value ties
  Tensor huge({n}, 1e300);
  std::vector<double> tied{1e-9, 2e-9, 3e-9};
  CHECK(calibrate_sigma_gal(y, mean, huge, tied) == 1e-9);
  CHECK_THROWS(calibrate_sigma_gal(y, mean, spread, std::vector<double>{}));
}

TEST_CASE("normal quantiles") {
  for (double p : {0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.999}) {
    CHECK(std::abs(normal_quantile(p) - oracle_quantile(p)) < 1e-8);
    CHECK(std::abs(normal_cdf(oracle_quantile(p)) - p) < 1e-12);
  }
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(normal_quantile(0.95) - 1.6449) < 1e-4);
}

TEST_CASE("Gaussian quantiles") {
  QuantileLevels levels{0.05, 0.5, 0.95};
  ForecastBundle b = gaussian_quantiles(Tensor::vector({0.0, 3.0}), Tensor::vector({1.0, 0.0}), levels);
  CHECK(std::abs(b.quantiles.at({0, 2}) - 1.6449) < 1e-4);
  CHECK(std::abs(b.quantiles.at({0, 1})) < 1e-9);
  for (std::size_t j = 0; j < 3; ++j) CHECK(b.quantiles.at({1, j}) == 3.0);
  CHECK(b.mean.values() == std::vector<double>{0.0, 3.0});
  CHECK_THROWS(gaussian_quantiles(Tensor::vector({0.0}), Tensor::vector({-1.0}), levels));

  Rng rng(14);
  QuantileLevels many{0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99};
  ForecastBundle r = gaussian_quantiles(random_tensor({200}, rng, -5, 5), random_tensor({200}, rng, 1e-6, 4), many);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j + 1 < many.size(); ++j) CHECK(r.quantiles.at({i, j}) < r.quantiles.at({i, j + 1}));
}
