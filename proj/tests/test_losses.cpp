#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "jmqr/losses.hpp"
#include "support.hpp"

using namespace jmqr;
using testing_support::random_tensor;

namespace {

double pinball_sum(const std::vector<double>& ys, double tau, double c) {
  double total = 0.0;
  for (double y : ys) {
    const double r = y - c;
    total += r >= 0 ? tau * r : (tau - 1) * r;
  }
  return total;
}

}  // namespace

TEST_CASE("quantile levels") {
  QuantileLevels q = QuantileLevels::parse("0.05,0.2,0.8,0.95");
  CHECK(q.size() == 4);
  CHECK(q[2] == 0.8);
  CHECK(q.index_of(0.95) == 3);
  CHECK_THROWS(q.index_of(0.5));
  CHECK_THROWS(QuantileLevels({0.2, 0.1}));
  CHECK_THROWS(QuantileLevels({0.2, 0.2}));
  CHECK_THROWS(QuantileLevels({0.0, 0.5}));
  CHECK_THROWS(QuantileLevels({0.5, 1.0}));
  CHECK_THROWS(QuantileLevels::parse("0.1,abc"));
}

TEST_CASE("l2 over the grid") {
  Tensor y({2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(l2_grid(y, y) == 0.0);
  CHECK(l2_grid(Tensor::vector({3.0}), Tensor::vector({1.0})) == 4.0);
  CHECK(l2_grid(Tensor::vector({1.0, -1.0}), Tensor::vector({0.0, 0.0})) == 2.0);
  CHECK_THROWS_AS(l2_grid(y, Tensor({4})), ShapeError);
}

TEST_CASE("tilted loss values") {
  CHECK(tilted(0.9, 2.0) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(tilted(0.9, -2.0) == doctest::Approx(0.2).epsilon(1e-14));
  for (double tau : {0.05, 0.5, 0.95}) CHECK(tilted(tau, 0.0) == 0.0);
  CHECK_THROWS(tilted(0.0, 1.0));
  CHECK_THROWS(tilted(1.0, 1.0));
  CHECK_THROWS(tilted(-0.3, 1.0));
}

TEST_CASE("tilted loss properties") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const double tau = rng.uniform(0.01, 0.99);
    const double a = rng.uniform(-10, 10), b = rng.uniform(-10, 10);
    const double alpha = rng.uniform(0, 5), lam = rng.uniform();
    CHECK(tilted(tau, a) >= 0.0);
    if (a != 0.0) CHECK(tilted(tau, a) > 0.0);
    CHECK(tilted(tau, alpha * a) == doctest::Approx(alpha * tilted(tau, a)).epsilon(1e-12));
    CHECK(tilted(tau, lam * a + (1 - lam) * b) <= lam * tilted(tau, a) + (1 - lam) * tilted(tau, b) + 1e-12);
  }
}

TEST_CASE("constant minimizers of the pinball sum are empirical quantiles") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ys(25);
    for (double& y : ys) y = rng.normal() * 3 + 1;
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());
    for (double tau : {0.05, 0.2, 0.5, 0.8, 0.95}) {
      // brute force over a fine grid
      double best_c = 0, best = INFINITY;
      for (double c = sorted.front() - 1; c <= sorted.back() + 1; c += 1e-3) {
        const double v = pinball_sum(ys, tau, c);
        if (v < best) best = v, best_c = c;
      }
      // an empirical tau-quantile y_(k) satisfies k >= n tau and k - 1 <= n tau
      const double n = ys.size();
      const std::size_t lo = static_cast<std::size_t>(std::ceil(n * tau)) - 1;
      const std::size_t hi = static_cast<std::size_t>(std::floor(n * tau));
      CHECK(best_c >= sorted[lo] - 2e-3);
      CHECK(best_c <= sorted[std::min(hi, ys.size() - 1)] + 2e-3);
      CHECK(pinball_sum(ys, tau, sorted[lo]) <= best + 1e-9);
    }
  }
}

TEST_CASE("joint objective") {
  Tensor y = Tensor::vector({1.0});
  ForecastBundle perfect{Tensor::vector({1.0}), Tensor({1, 1}, 1.0)};
  CHECK(joint_objective(y, perfect, QuantileLevels{0.9}) == 0.0);
  ForecastBundle zero{Tensor::vector({0.0}), Tensor({1, 1}, 0.0)};
  CHECK(joint_objective(y, zero, QuantileLevels{0.9}) == doctest::Approx(1.9).epsilon(1e-15));
  CHECK_THROWS(joint_objective(y, zero, QuantileLevels{0.1, 0.9}));
}

TEST_CASE("joint objective is additive") {
  Rng rng(3);
  QuantileLevels levels{0.05, 0.2, 0.8, 0.95};
  for (int trial = 0; trial < 20; ++trial) {
    Tensor y = random_tensor({4, 3}, rng, -5, 5);
    ForecastBundle b{random_tensor({4, 3}, rng, -5, 5), random_tensor({4, 3, 4}, rng, -5, 5)};
    double expect = l2_grid(y, b.mean);
    for (std::size_t j = 0; j < levels.size(); ++j) {
      Tensor q = b.quantile(j);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - q[i];
        expect += std::max(levels[j] * r, (levels[j] - 1) * r);
      }
    }
    CHECK(std::abs(joint_objective(y, b, levels) - expect) < 1e-12);
  }
}

TEST_CASE("batch loss averages samples and sums cells and channels") {
  Rng rng(4);
  QuantileLevels levels{0.1, 0.9};
  std::vector<Task> tasks = joint_tasks(levels);
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].kind == Task::Kind::mean);
  CHECK(tasks[2].tau == 0.9);

  Tensor pred = random_tensor({5, 2, 2, 3}, rng);
  Tensor y = random_tensor({5, 2, 2}, rng);
  double expect = 0.0;
  for (std::size_t b = 0; b < 5; ++b) {
    ForecastBundle one = split_heads(pred.row(b));
    expect += joint_objective(y.row(b), one, levels);
  }
  expect /= 5;
  CHECK(task_loss_value(pred, y, tasks) == doctest::Approx(expect).epsilon(1e-13));

  // the multiplier scales only the pinball part
  double l2 = 0.0;
  for (std::size_t b = 0; b < 5; ++b) l2 += l2_grid(y.row(b), split_heads(pred.row(b)).mean);
  l2 /= 5;
  CHECK(task_loss_value(pred, y, tasks, 3.0) == doctest::Approx(l2 + 3.0 * (expect - l2)).epsilon(1e-13));

  CHECK_THROWS_AS(task_loss_value(random_tensor({5, 2, 2, 2}, rng), y, tasks), ShapeError);
}

TEST_CASE("loss gradients away from the kink") {
  Rng rng(5);
  std::vector<Task> tasks = joint_tasks(QuantileLevels{0.05, 0.5, 0.95});
  for (int trial = 0; trial < 20; ++trial) {
    Tensor y = random_tensor({3, 2, 2}, rng);
    Tensor pred = random_tensor({3, 2, 2, 4}, rng);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double target = y[i / 4];
      if (std::abs(pred[i] - target) < 1e-3) pred[i] = target + 0.01;
    }
    std::vector<Tensor> params{pred};
    auto f = [&](Tape&, std::span<const Var> p) { return task_loss(p[0], y, tasks); };
    CHECK(grad_check(f, params) < 1e-8);
  }
}

TEST_CASE("forecast bundle layout") {
  Tensor out({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  ForecastBundle b = split_heads(out);
  CHECK(b.mean.values() == std::vector<double>{1, 4});
  CHECK(b.quantiles.shape() == Shape{2, 2});
  CHECK(b.quantile(1).values() == std::vector<double>{3, 6});
  CHECK(b.levels() == 2);
  CHECK_NOTHROW(b.validate(2));
  CHECK_THROWS(b.validate(3));
}
