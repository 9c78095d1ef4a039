#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "jmqr/autograd.hpp"
#include "jmqr/layers.hpp"
#include "support.hpp"

using namespace jmqr;
using testing_support::binder_grad_check;
using testing_support::max_abs_diff;
using testing_support::random_tensor;

TEST_CASE("square has derivative 2x") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  Var loss = ag::square(x);
  tape.backward(loss);
  CHECK(loss.value().item() == 9.0);
  CHECK(x.grad().item() == 6.0);
}

TEST_CASE("pinball slope") {
  for (double r : {2.0, -2.0, 0.0}) {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(r));
    Var loss = ag::sum(ag::pinball(x, 0.9));
    tape.backward(loss);
    // the kink takes the tau-side slope
    CHECK(x.grad().item() == doctest::Approx(r < 0 ? -0.1 : 0.9).epsilon(1e-15));
  }
}

TEST_CASE("sum of a convolution: input gradient is the flipped kernel applied to ones") {
  Rng rng(4);
  Tensor x = random_tensor({4, 5, 2}, rng);
  Tensor k = random_tensor({3, 3, 2, 3}, rng);
  Tape tape;
  Var xv = tape.leaf(x);
  Var kv = tape.leaf(k);
  tape.backward(ag::sum(ag::conv2d(xv, kv)));

  // full correlation of ones with the spatially flipped, channel-transposed kernel
  Tensor flipped({3, 3, 3, 2});
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t v = 0; v < 3; ++v)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t o = 0; o < 3; ++o) flipped.at({2 - u, 2 - v, o, i}) = k.at({u, v, i, o});
  Tensor expect = conv2d_same(Tensor({4, 5, 3}, 1.0), flipped);
  CHECK(max_abs_diff(xv.grad(), expect) < 1e-12);

  auto f = [](Tape&, std::span<const Var> p) { return ag::sum(ag::conv2d(p[0], p[1])); };
  std::vector<Tensor> params{x, k};
  CHECK(grad_check(f, params) < 1e-8);
}

TEST_CASE("grad_check of a product") {
  auto f = [](Tape&, std::span<const Var> p) { return ag::sum(ag::mul(p[0], p[1])); };
  std::vector<Tensor> params{Tensor::scalar(2.0), Tensor::scalar(3.0)};
  Tape tape;
  Var x = tape.leaf(params[0]);
  Var y = tape.leaf(params[1]);
  tape.backward(ag::sum(ag::mul(x, y)));
  CHECK(x.grad().item() == 3.0);
  CHECK(y.grad().item() == 2.0);
  CHECK(grad_check(f, params) < 1e-8);
}

TEST_CASE("grad_check of dense + tanh") {
  Rng rng(9);
  std::vector<Tensor> params{random_tensor({3, 5}, rng), random_tensor({5, 4}, rng),
                             random_tensor({4}, rng)};
  auto f = [](Tape&, std::span<const Var> p) {
    return ag::sum(ag::square(ag::tanh(ag::add_bias(ag::matmul(p[0], p[1]), p[2]))));
  };
  CHECK(grad_check(f, params) < 1e-6);
}

TEST_CASE("grad_check of a single ConvLSTM step on a 3x3 grid") {
  Rng rng(12);
  ConvLSTMLayer layer = ConvLSTMLayer::create(1, 2, 3, 3, rng);
  Tensor input = random_tensor({3, 3, 1}, rng);
  Tensor c0 = random_tensor({3, 3, 2}, rng);
  Tensor h0 = random_tensor({3, 3, 2}, rng, -0.9, 0.9);
  std::vector<Tensor*> params{&layer.w_yi, &layer.w_hi, &layer.w_yf, &layer.w_hf, &layer.w_yc,
                              &layer.w_hc, &layer.w_yo, &layer.w_ho, &layer.b_i,  &layer.b_f,
                              &layer.b_c,  &layer.b_o,  &input,      &c0,         &h0};
  double err = binder_grad_check(params, [&](Binder& bind) {
    ConvLSTMStateVars next = layer.step(bind, bind(input), {bind(c0), bind(h0)});
    return ag::add(ag::sum(ag::square(next.h)), ag::sum(next.c));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("gradients of a sum of losses add up") {
  Rng rng(21);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor x = random_tensor({5, 4}, rng);
  auto loss_a = [&](Var wv, Tape& t) { return ag::sum(ag::square(ag::matmul(t.constant(x), wv))); };
  auto loss_b = [&](Var wv, Tape& t) { return ag::sum(ag::pinball(ag::matmul(t.constant(x), wv), 0.3)); };

  Tape ta, tb, tab;
  Var wa = ta.leaf(w), wb = tb.leaf(w), wab = tab.leaf(w);
  ta.backward(loss_a(wa, ta));
  tb.backward(loss_b(wb, tb));
  tab.backward(ag::add(loss_a(wab, tab), loss_b(wab, tab)));
  CHECK(max_abs_diff(wab.grad(), add(wa.grad(), wb.grad())) < 1e-12);
}

TEST_CASE("backward on a fresh graph starts from zero") {
  Tensor w = Tensor::scalar(1.5);
  for (int round = 0; round < 3; ++round) {
    Tape tape;
    Var v = tape.leaf(w);
    tape.backward(ag::scale(v, 4.0));
    CHECK(v.grad().item() == 4.0);
  }
  Tape tape;
  Var v = tape.leaf(w);
  Var loss = ag::scale(v, 4.0);
  tape.backward(loss);
  tape.backward(loss);
  CHECK(v.grad().item() == 4.0);
}

TEST_CASE("backward and grad_check reject bad inputs") {
  Tape tape;
  Var v = tape.leaf(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS(tape.backward(v));
  auto f = [](Tape&, std::span<const Var> p) { return ag::sum(p[0]); };
  std::vector<Tensor> params{Tensor::scalar(1.0)};
  CHECK_THROWS(grad_check(f, params, 0.0));
}

TEST_CASE("column, reshape and mask") {
  Rng rng(30);
  std::vector<Tensor> params{random_tensor({2, 3, 4}, rng)};
  Tensor m = random_tensor({2, 3}, rng);
  auto f = [&](Tape&, std::span<const Var> p) {
    Var c = ag::mask(ag::column(p[0], 2), m);
    return ag::sum(ag::square(ag::add(ag::reshape(c, {6}), ag::reshape(ag::column(p[0], 0), {6}))));
  };
  CHECK(grad_check(f, params) < 1e-8);
}
