#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowood/rng.hpp"

namespace flowood {

enum class Activation : std::uint32_t { linear = 0, tanh = 1, sigmoid = 2 };

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // row-major [out_dim x in_dim]
  std::vector<double> bias;     // [out_dim]
  Activation activation = Activation::linear;
};

// Plain multi-layer perceptron in 64-bit floats. Consecutive layer
// dimensions must chain and all weights must stay finite.
struct DenseNet {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
  std::size_t parameter_count() const;
};

// Cheap structural fingerprint used to detect stale tapes.
std::uint64_t net_signature(const DenseNet& net);

// Cached forward-pass state consumed by net_backward. Reusable across calls;
// buffers are resized in place.
struct GradientTape {
  std::vector<double> input;
  std::vector<std::vector<double>> activations;  // post-activation per layer
  std::uint64_t signature = 0;
  bool valid = false;
  // scratch for the backward sweep
  std::vector<double> grad_out;
  std::vector<double> grad_in;
};

// Parameter gradients shaped like a DenseNet; accumulated into.
struct NetGradients {
  std::vector<std::vector<double>> weight_grads;
  std::vector<std::vector<double>> bias_grads;

  void resize_for(const DenseNet& net);
  void zero();
  void add(const NetGradients& other);
  void scale(double factor);
  bool empty() const { return weight_grads.empty(); }
};

// dims = {input, hidden..., output}; hidden layers get `hidden` activation,
// the last layer `output`. Hidden weights are Glorot-uniform; when
// zero_init_last is set the final layer starts at exactly zero so the
// surrounding coupling transform begins as the identity.
DenseNet make_dense_net(const std::vector<std::size_t>& dims, Activation hidden,
                        Activation output, Rng& rng, bool zero_init_last);

std::vector<double> net_forward(const DenseNet& net, std::span<const double> x);
// Tape-recording variant; the returned reference points into the tape.
const std::vector<double>& net_forward(const DenseNet& net, std::span<const double> x,
                                       GradientTape& tape);

// Reverse-mode derivatives of <y, dy>. Accumulates parameter gradients into
// `grads` (auto-sized when empty) and returns d/dx.
std::vector<double> net_backward(const DenseNet& net, GradientTape& tape,
                                 std::span<const double> dy, NetGradients& grads);

}  // namespace flowood
