#include "flowood/dense_net.hpp"

#include <cmath>
#include <string>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"

namespace flowood {
namespace {

void apply_activation(Activation act, const std::vector<double>& z, std::vector<double>& a) {
  a.resize(z.size());
  switch (act) {
    case Activation::linear:
      a = z;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::tanh(z[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = 1.0 / (1.0 + std::exp(-z[i]));
      break;
  }
}

// d act/d z expressed through the cached post-activation value.
inline double activation_grad(Activation act, double a) {
  switch (act) {
    case Activation::tanh:
      return 1.0 - a * a;
    case Activation::sigmoid:
      return a * (1.0 - a);
    default:
      return 1.0;
  }
}

void check_input(const DenseNet& net, std::span<const double> x) {
  if (net.layers.empty()) throw usage_error("net_forward: network has no layers");
  if (x.size() != net.input_dim()) {
    throw data_error("net_forward: input length " + std::to_string(x.size()) +
                     " does not match network input dim " + std::to_string(net.input_dim()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw numeric_error("net_forward: non-finite input value");
  }
}

}  // namespace

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::uint64_t net_signature(const DenseNet& net) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL ^ net.layers.size();
  for (const auto& l : net.layers) {
    h = mix64(h ^ l.in_dim);
    h = mix64(h ^ (l.out_dim << 16));
    h = mix64(h ^ static_cast<std::uint64_t>(l.activation));
  }
  return h;
}

void NetGradients::resize_for(const DenseNet& net) {
  weight_grads.resize(net.layers.size());
  bias_grads.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    weight_grads[l].assign(net.layers[l].weights.size(), 0.0);
    bias_grads[l].assign(net.layers[l].bias.size(), 0.0);
  }
}

void NetGradients::zero() {
  for (auto& w : weight_grads) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias_grads) std::fill(b.begin(), b.end(), 0.0);
}

void NetGradients::add(const NetGradients& other) {
  for (std::size_t l = 0; l < weight_grads.size(); ++l) {
    kernels::axpy(1.0, other.weight_grads[l].data(), weight_grads[l].data(),
                  weight_grads[l].size());
    kernels::axpy(1.0, other.bias_grads[l].data(), bias_grads[l].data(), bias_grads[l].size());
  }
}

void NetGradients::scale(double factor) {
  for (auto& w : weight_grads) kernels::scale(factor, w.data(), w.size());
  for (auto& b : bias_grads) kernels::scale(factor, b.data(), b.size());
}

DenseNet make_dense_net(const std::vector<std::size_t>& dims, Activation hidden,
                        Activation output, Rng& rng, bool zero_init_last) {
  if (dims.size() < 2) throw usage_error("make_dense_net: need at least input and output dims");
  DenseNet net;
  net.layers.resize(dims.size() - 1);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer& layer = net.layers[l];
    layer.in_dim = dims[l];
    layer.out_dim = dims[l + 1];
    if (layer.in_dim == 0 || layer.out_dim == 0)
      throw usage_error("make_dense_net: zero layer dimension");
    layer.activation = (l + 1 == net.layers.size()) ? output : hidden;
    layer.weights.assign(layer.out_dim * layer.in_dim, 0.0);
    layer.bias.assign(layer.out_dim, 0.0);
    const bool last = (l + 1 == net.layers.size());
    if (!(last && zero_init_last)) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
      for (double& w : layer.weights) w = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }
  return net;
}

std::vector<double> net_forward(const DenseNet& net, std::span<const double> x) {
  check_input(net, x);
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> z;
  for (const auto& layer : net.layers) {
    z.resize(layer.out_dim);
    kernels::matvec(layer.weights.data(), layer.out_dim, layer.in_dim, cur.data(),
                    layer.bias.data(), z.data());
    apply_activation(layer.activation, z, cur);
  }
  return cur;
}

const std::vector<double>& net_forward(const DenseNet& net, std::span<const double> x,
                                       GradientTape& tape) {
  check_input(net, x);
  tape.input.assign(x.begin(), x.end());
  tape.activations.resize(net.layers.size());
  const std::vector<double>* cur = &tape.input;
  std::vector<double>& z = tape.grad_out;  // reuse scratch for pre-activations
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    z.resize(layer.out_dim);
    kernels::matvec(layer.weights.data(), layer.out_dim, layer.in_dim, cur->data(),
                    layer.bias.data(), z.data());
    apply_activation(layer.activation, z, tape.activations[l]);
    cur = &tape.activations[l];
  }
  tape.signature = net_signature(net);
  tape.valid = true;
  return tape.activations.back();
}

std::vector<double> net_backward(const DenseNet& net, GradientTape& tape,
                                 std::span<const double> dy, NetGradients& grads) {
  if (!tape.valid || tape.signature != net_signature(net))
    throw usage_error("net_backward: tape is stale or was produced by a different network");
  if (dy.size() != net.output_dim())
    throw data_error("net_backward: cotangent length does not match network output dim");
  if (grads.empty()) {
    grads.resize_for(net);
  } else if (grads.weight_grads.size() != net.layers.size()) {
    throw usage_error("net_backward: gradient accumulator shaped for a different network");
  } else {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      if (grads.weight_grads[l].size() != net.layers[l].weights.size() ||
          grads.bias_grads[l].size() != net.layers[l].bias.size())
        throw usage_error("net_backward: gradient accumulator shaped for a different network");
    }
  }

  std::vector<double>& g = tape.grad_out;
  std::vector<double>& g_prev = tape.grad_in;
  g.assign(dy.begin(), dy.end());

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    const std::vector<double>& a = tape.activations[l];
    // post-activation -> pre-activation gradient, in place
    if (layer.activation != Activation::linear) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activation_grad(layer.activation, a[i]);
    }
    const std::vector<double>& in = (l == 0) ? tape.input : tape.activations[l - 1];
    kernels::axpy(1.0, g.data(), grads.bias_grads[l].data(), layer.out_dim);
    kernels::ger(grads.weight_grads[l].data(), layer.out_dim, layer.in_dim, g.data(), in.data());
    g_prev.resize(layer.in_dim);
    kernels::matvec_t(layer.weights.data(), layer.out_dim, layer.in_dim, g.data(), g_prev.data());
    g.swap(g_prev);
  }
  return g;
}

}  // namespace flowood
