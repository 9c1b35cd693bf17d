#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowood/dense_net.hpp"

namespace flowood {

// Affine coupling layer: coordinates with mask 1 pass through unchanged and
// condition two networks that scale and translate the remaining coordinates.
// The raw scale output is clamped to (-scale_clamp, scale_clamp) through
// s = c * tanh(s_raw / c) to keep deep stacks stable.
struct CouplingLayer {
  std::vector<std::uint8_t> mask;  // 1 = pass-through, 0 = transformed
  DenseNet s_net;
  DenseNet t_net;
  double scale_clamp = 3.0;

  // index lists derived from the mask
  std::vector<std::uint32_t> pass_idx;
  std::vector<std::uint32_t> trans_idx;

  std::size_t dim() const { return mask.size(); }
  void rebuild_index();
  void validate() const;
};

// Contiguous half-mask: even layers pass the first ceil(dim/2) coordinates
// through, odd layers the complement.
std::vector<std::uint8_t> half_mask(std::size_t dim, bool odd_layer);

// Conditioner networks sized from the mask partition; hidden tanh layers of
// `width`, zero-initialized final layer so the coupling starts as identity.
CouplingLayer make_coupling_layer(std::vector<std::uint8_t> mask, std::size_t conditioner_depth,
                                  std::size_t conditioner_width, double scale_clamp, Rng& rng);

// Reusable per-layer scratch recorded by the density-direction pass and
// consumed by the backward sweep.
struct CouplingTape {
  std::vector<double> cond_in;    // pass-through coordinates (conditioner input)
  std::vector<double> s_clamped;  // clamped scale outputs
  std::vector<double> exp_neg_s;
  std::vector<double> out_trans;  // transformed coordinates of the output
  GradientTape s_tape;
  GradientTape t_tape;
  std::vector<double> ds;  // backward scratch
  std::vector<double> dt;
};

// Density direction: x_B = (y_B - t(y_A)) * exp(-s(y_A)), logdet = -sum(s).
void coupling_inverse(const CouplingLayer& layer, std::span<const double> y, std::span<double> x,
                      double& logdet);
void coupling_inverse(const CouplingLayer& layer, std::span<const double> y, std::span<double> x,
                      double& logdet, CouplingTape& tape);

// Sampling direction: y_B = x_B * exp(s(x_A)) + t(x_A), logdet = +sum(s).
void coupling_forward(const CouplingLayer& layer, std::span<const double> x, std::span<double> y,
                      double& logdet);

// Given g_x = dL/d(inverse output) plus the implicit dL/d(logdet) = 1,
// accumulates conditioner gradients and writes dL/d(inverse input) to g_y.
void coupling_inverse_backward(const CouplingLayer& layer, CouplingTape& tape,
                               std::span<const double> g_x, std::span<double> g_y,
                               NetGradients& s_grads, NetGradients& t_grads);

}  // namespace flowood
