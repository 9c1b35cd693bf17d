#include "doctest.h"

#include <cmath>
#include <vector>

#include "flowood/dense_net.hpp"
#include "flowood/errors.hpp"
#include "test_util.hpp"

using namespace flowood;

namespace {

DenseNet single_linear_layer(std::vector<double> w, std::vector<double> b, std::size_t in,
                             std::size_t out) {
  DenseNet net;
  DenseLayer layer;
  layer.in_dim = in;
  layer.out_dim = out;
  layer.weights = std::move(w);
  layer.bias = std::move(b);
  layer.activation = Activation::linear;
  net.layers.push_back(std::move(layer));
  return net;
}

// Independent straightforward re-implementation of the forward pass.
std::vector<double> naive_forward(const DenseNet& net, const std::vector<double>& x) {
  std::vector<double> cur = x;
  for (const auto& layer : net.layers) {
    std::vector<double> next(layer.out_dim);
    for (std::size_t r = 0; r < layer.out_dim; ++r) {
      double acc = layer.bias[r];
      for (std::size_t c = 0; c < layer.in_dim; ++c) acc += layer.weights[r * layer.in_dim + c] * cur[c];
      switch (layer.activation) {
        case Activation::tanh: acc = std::tanh(acc); break;
        case Activation::sigmoid: acc = 1.0 / (1.0 + std::exp(-acc)); break;
        case Activation::linear: break;
      }
      next[r] = acc;
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

TEST_CASE("net_forward: identity single layer") {
  DenseNet net = single_linear_layer({1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}, 2, 2);
  const std::vector<double> x = {1.0, 2.0};
  const auto y = net_forward(net, x);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
}

TEST_CASE("net_forward: hand-computed affine map") {
  DenseNet net = single_linear_layer({2.0, 0.0, 0.0, 3.0}, {1.0, 1.0}, 2, 2);
  const std::vector<double> x = {1.0, 1.0};
  const auto y = net_forward(net, x);
  CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("net_forward: random 4-layer net matches naive re-implementation") {
  Rng rng(5);
  DenseNet net = testutil::random_dense_net({94, 94, 94, 94, 94}, Activation::tanh,
                                            Activation::linear, rng, 0.4);
  std::vector<double> x(94);
  for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
  const auto y = net_forward(net, x);
  const auto expect = naive_forward(net, x);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("net_forward: deterministic bit-identical repeats") {
  Rng rng(6);
  DenseNet net = testutil::random_dense_net({10, 16, 10}, Activation::tanh, Activation::linear,
                                            rng, 0.5);
  std::vector<double> x(10);
  for (double& v : x) v = rng.normal();
  CHECK(net_forward(net, x) == net_forward(net, x));
}

TEST_CASE("net_forward: error paths") {
  Rng rng(7);
  DenseNet net = testutil::random_dense_net({4, 8, 4}, Activation::tanh, Activation::linear, rng,
                                            0.5);
  std::vector<double> short_x = {1.0, 2.0};
  CHECK_THROWS_AS((void)net_forward(net, short_x), Error);
  std::vector<double> bad_x = {1.0, 2.0, std::nan(""), 0.0};
  CHECK_THROWS_AS((void)net_forward(net, bad_x), Error);
  try {
    (void)net_forward(net, bad_x);
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::numeric);
  }
}

TEST_CASE("net_backward: linear layer calculus") {
  DenseNet net = single_linear_layer({1.0, 2.0, 3.0, 4.0}, {0.5, -0.5}, 2, 2);
  GradientTape tape;
  const std::vector<double> x = {0.7, -1.3};
  net_forward(net, x, tape);
  NetGradients grads;
  const std::vector<double> dy = {1.0, 0.0};  // e1
  const auto dx = net_backward(net, tape, dy, grads);
  // dx = W^T e1 = first row of W
  CHECK(dx[0] == doctest::Approx(1.0));
  CHECK(dx[1] == doctest::Approx(2.0));
  // dW = e1 x^T
  CHECK(grads.weight_grads[0][0] == doctest::Approx(0.7));
  CHECK(grads.weight_grads[0][1] == doctest::Approx(-1.3));
  CHECK(grads.weight_grads[0][2] == 0.0);
  CHECK(grads.weight_grads[0][3] == 0.0);
  // db = e1
  CHECK(grads.bias_grads[0][0] == 1.0);
  CHECK(grads.bias_grads[0][1] == 0.0);
}

TEST_CASE("net_backward: zero cotangent gives exactly zero gradients") {
  Rng rng(8);
  DenseNet net = testutil::random_dense_net({5, 9, 3}, Activation::tanh, Activation::sigmoid, rng,
                                            0.5);
  GradientTape tape;
  std::vector<double> x(5);
  for (double& v : x) v = rng.normal();
  net_forward(net, x, tape);
  NetGradients grads;
  const std::vector<double> dy = {0.0, 0.0, 0.0};
  const auto dx = net_backward(net, tape, dy, grads);
  for (double v : dx) CHECK(v == 0.0);
  for (const auto& w : grads.weight_grads)
    for (double v : w) CHECK(v == 0.0);
  for (const auto& b : grads.bias_grads)
    for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("net_backward: finite-difference oracle over all parameters") {
  Rng rng(9);
  DenseNet net = testutil::random_dense_net({4, 7, 6, 3}, Activation::tanh, Activation::linear,
                                            rng, 0.5);
  std::vector<double> x(4);
  for (double& v : x) v = rng.normal();
  std::vector<double> r(3);  // loss = <r, net(x)>
  for (double& v : r) v = 2.0 * rng.uniform() - 1.0;

  GradientTape tape;
  net_forward(net, x, tape);
  NetGradients grads;
  const auto dx = net_backward(net, tape, r, grads);

  auto loss = [&](const DenseNet& n, const std::vector<double>& in) {
    const auto y = naive_forward(n, in);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += r[i] * y[i];
    return acc;
  };

  const double step = 1e-5;
  auto check_close = [](double analytic, double numeric) {
    const double denom = std::max({1e-8, std::fabs(analytic), std::fabs(numeric)});
    CHECK(std::fabs(analytic - numeric) / denom < 1e-4);
  };

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (std::size_t k = 0; k < net.layers[l].weights.size(); ++k) {
      DenseNet perturbed = net;
      perturbed.layers[l].weights[k] += step;
      const double up = loss(perturbed, x);
      perturbed.layers[l].weights[k] -= 2.0 * step;
      const double down = loss(perturbed, x);
      check_close(grads.weight_grads[l][k], (up - down) / (2.0 * step));
    }
    for (std::size_t k = 0; k < net.layers[l].bias.size(); ++k) {
      DenseNet perturbed = net;
      perturbed.layers[l].bias[k] += step;
      const double up = loss(perturbed, x);
      perturbed.layers[l].bias[k] -= 2.0 * step;
      const double down = loss(perturbed, x);
      check_close(grads.bias_grads[l][k], (up - down) / (2.0 * step));
    }
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    std::vector<double> xp = x;
    xp[k] += step;
    const double up = loss(net, xp);
    xp[k] -= 2.0 * step;
    const double down = loss(net, xp);
    check_close(dx[k], (up - down) / (2.0 * step));
  }
}

TEST_CASE("net_backward: stale tape is rejected") {
  Rng rng(10);
  DenseNet net = testutil::random_dense_net({3, 5, 2}, Activation::tanh, Activation::linear, rng,
                                            0.5);
  DenseNet other = testutil::random_dense_net({3, 6, 2}, Activation::tanh, Activation::linear,
                                              rng, 0.5);
  GradientTape tape;
  NetGradients grads;
  const std::vector<double> dy = {1.0, 1.0};
  CHECK_THROWS_AS((void)net_backward(net, tape, dy, grads), Error);  // never recorded
  std::vector<double> x = {0.1, 0.2, 0.3};
  net_forward(net, x, tape);
  CHECK_THROWS_AS((void)net_backward(other, tape, dy, grads), Error);  // different net
}

TEST_CASE("make_dense_net: zero-initialized final layer") {
  Rng rng(12);
  DenseNet net = make_dense_net({4, 8, 8, 2}, Activation::tanh, Activation::linear, rng, true);
  for (double w : net.layers.back().weights) CHECK(w == 0.0);
  for (double b : net.layers.back().bias) CHECK(b == 0.0);
  bool any_nonzero = false;
  for (double w : net.layers.front().weights) any_nonzero = any_nonzero || w != 0.0;
  CHECK(any_nonzero);
}
