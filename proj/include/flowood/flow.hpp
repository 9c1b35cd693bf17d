#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowood/base_dist.hpp"
#include "flowood/coupling.hpp"
#include "flowood/matrix.hpp"

namespace flowood {

// Real-NVP style stack of affine coupling layers over a base distribution.
// Layers are stored in sampling order; density evaluation applies their
// inverses from the last layer down.
struct FlowModel {
  std::size_t dim = 0;
  std::vector<CouplingLayer> layers;
  BaseDistribution base = GaussianBase{};
};

// Checks mask lengths, conditioner shapes, weight finiteness and that any
// two consecutive layers transform every coordinate at least once.
void validate_flow_model(const FlowModel& model);

FlowModel make_flow_model(std::size_t dim, std::size_t num_layers, std::size_t conditioner_depth,
                          std::size_t conditioner_width, double scale_clamp,
                          BaseDistribution base, Rng& rng);

// Exact log density with its decomposition. `total` is computed as the
// literal sum base_term + logdet_term, so the identity holds bit-for-bit.
struct LogDensityResult {
  double total = 0.0;
  double base_term = 0.0;
  double logdet_term = 0.0;
  std::vector<double> latent;
};

LogDensityResult flow_log_prob(const FlowModel& model, std::span<const double> a);

// Gradients of all trainable parameters, shaped like the model.
struct FlowGradients {
  std::vector<NetGradients> s_grads;
  std::vector<NetGradients> t_grads;
  NetGradients accept_grads;  // resampling base only

  void resize_for(const FlowModel& model);
  void zero();
  void add(const FlowGradients& other);
  void scale(double factor);
  bool empty() const { return s_grads.empty() && accept_grads.empty(); }
};

// Reusable scratch for one in-flight gradient evaluation.
struct FlowWorkspace {
  std::vector<CouplingTape> tapes;
  GradientTape accept_tape;
  std::vector<double> x_cur, x_next, g_cur, g_next;
};

// Accumulates d(log q(a))/d(theta) into grads and returns the log density.
double flow_log_prob_backward(const FlowModel& model, std::span<const double> a,
                              FlowWorkspace& ws, FlowGradients& grads);

// Mean negative log-likelihood over a batch and its gradient (including the
// -1/B factor). The reduction runs over fixed-size chunks summed in index
// order, so results do not depend on the worker count.
class BatchGradient {
 public:
  double evaluate(const FlowModel& model, std::span<const std::span<const double>> batch,
                  FlowGradients& out);

 private:
  std::vector<FlowGradients> partials_;
  std::vector<FlowWorkspace> workspaces_;
  std::vector<double> log_probs_;
};

// One-shot convenience wrapper around BatchGradient.
double flow_nll_gradient(const FlowModel& model, std::span<const std::span<const double>> batch,
                         FlowGradients& out);

// Draws from the base distribution pushed through the coupling stack.
Matrix flow_sample(const FlowModel& model, std::size_t n, std::uint64_t seed);

// Flat parameter vector helpers (layer s/t conditioners in order, then the
// acceptance network; weights before bias within each dense layer).
std::size_t parameter_count(const FlowModel& model);
void gather_parameters(const FlowModel& model, std::span<double> flat);
void scatter_parameters(FlowModel& model, std::span<const double> flat);
void gather_gradients(const FlowGradients& grads, std::span<double> flat);

}  // namespace flowood
