#include "flowood/coupling.hpp"

#include <cmath>
#include <string>

#include "flowood/errors.hpp"

namespace flowood {
namespace {

inline double clamp_scale(double raw, double c) { return c * std::tanh(raw / c); }

void check_vector_dim(const CouplingLayer& layer, std::size_t n, const char* what) {
  if (n != layer.dim())
    throw data_error(std::string(what) + ": vector length " + std::to_string(n) +
                     " does not match coupling dim " + std::to_string(layer.dim()));
}

}  // namespace

void CouplingLayer::rebuild_index() {
  pass_idx.clear();
  trans_idx.clear();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (mask[i] ? pass_idx : trans_idx).push_back(static_cast<std::uint32_t>(i));
  }
}

void CouplingLayer::validate() const {
  if (pass_idx.empty() || trans_idx.empty())
    throw data_error("coupling layer: mask must contain at least one 1 and one 0");
  if (pass_idx.size() + trans_idx.size() != mask.size())
    throw usage_error("coupling layer: index lists out of sync with mask");
  if (s_net.input_dim() != pass_idx.size() || s_net.output_dim() != trans_idx.size() ||
      t_net.input_dim() != pass_idx.size() || t_net.output_dim() != trans_idx.size())
    throw data_error("coupling layer: conditioner dims do not match mask partition");
  if (!(scale_clamp > 0.0)) throw data_error("coupling layer: scale_clamp must be positive");
}

std::vector<std::uint8_t> half_mask(std::size_t dim, bool odd_layer) {
  std::vector<std::uint8_t> mask(dim, 0);
  const std::size_t split = (dim + 1) / 2;
  for (std::size_t i = 0; i < dim; ++i) mask[i] = (i < split) == !odd_layer ? 1 : 0;
  return mask;
}

CouplingLayer make_coupling_layer(std::vector<std::uint8_t> mask, std::size_t conditioner_depth,
                                  std::size_t conditioner_width, double scale_clamp, Rng& rng) {
  if (conditioner_depth < 1) throw usage_error("make_coupling_layer: conditioner depth >= 1");
  CouplingLayer layer;
  layer.mask = std::move(mask);
  layer.scale_clamp = scale_clamp;
  layer.rebuild_index();
  std::vector<std::size_t> dims;
  dims.push_back(layer.pass_idx.size());
  for (std::size_t i = 0; i + 1 < conditioner_depth; ++i) dims.push_back(conditioner_width);
  dims.push_back(layer.trans_idx.size());
  layer.s_net = make_dense_net(dims, Activation::tanh, Activation::linear, rng, true);
  layer.t_net = make_dense_net(dims, Activation::tanh, Activation::linear, rng, true);
  layer.validate();
  return layer;
}

void coupling_inverse(const CouplingLayer& layer, std::span<const double> y, std::span<double> x,
                      double& logdet) {
  check_vector_dim(layer, y.size(), "coupling_inverse");
  std::vector<double> cond_in(layer.pass_idx.size());
  for (std::size_t i = 0; i < layer.pass_idx.size(); ++i) cond_in[i] = y[layer.pass_idx[i]];
  const std::vector<double> s_raw = net_forward(layer.s_net, cond_in);
  const std::vector<double> t = net_forward(layer.t_net, cond_in);

  double scale_sum = 0.0;
  for (std::size_t j = 0; j < layer.trans_idx.size(); ++j) {
    const double s = clamp_scale(s_raw[j], layer.scale_clamp);
    const double xb = (y[layer.trans_idx[j]] - t[j]) * std::exp(-s);
    if (!std::isfinite(xb)) throw numeric_error("coupling_inverse: non-finite output value");
    x[layer.trans_idx[j]] = xb;
    scale_sum += s;
  }
  for (std::size_t i = 0; i < layer.pass_idx.size(); ++i) x[layer.pass_idx[i]] = cond_in[i];
  logdet = -scale_sum;
}

void coupling_inverse(const CouplingLayer& layer, std::span<const double> y, std::span<double> x,
                      double& logdet, CouplingTape& tape) {
  check_vector_dim(layer, y.size(), "coupling_inverse");
  const std::size_t n_pass = layer.pass_idx.size();
  const std::size_t n_trans = layer.trans_idx.size();
  tape.cond_in.resize(n_pass);
  for (std::size_t i = 0; i < n_pass; ++i) tape.cond_in[i] = y[layer.pass_idx[i]];
  const std::vector<double>& s_raw = net_forward(layer.s_net, tape.cond_in, tape.s_tape);
  const std::vector<double>& t = net_forward(layer.t_net, tape.cond_in, tape.t_tape);

  tape.s_clamped.resize(n_trans);
  tape.exp_neg_s.resize(n_trans);
  tape.out_trans.resize(n_trans);
  double scale_sum = 0.0;
  for (std::size_t j = 0; j < n_trans; ++j) {
    const double s = clamp_scale(s_raw[j], layer.scale_clamp);
    const double e = std::exp(-s);
    const double xb = (y[layer.trans_idx[j]] - t[j]) * e;
    if (!std::isfinite(xb)) throw numeric_error("coupling_inverse: non-finite output value");
    tape.s_clamped[j] = s;
    tape.exp_neg_s[j] = e;
    tape.out_trans[j] = xb;
    x[layer.trans_idx[j]] = xb;
    scale_sum += s;
  }
  for (std::size_t i = 0; i < n_pass; ++i) x[layer.pass_idx[i]] = tape.cond_in[i];
  logdet = -scale_sum;
}

void coupling_forward(const CouplingLayer& layer, std::span<const double> x, std::span<double> y,
                      double& logdet) {
  check_vector_dim(layer, x.size(), "coupling_forward");
  std::vector<double> cond_in(layer.pass_idx.size());
  for (std::size_t i = 0; i < layer.pass_idx.size(); ++i) cond_in[i] = x[layer.pass_idx[i]];
  const std::vector<double> s_raw = net_forward(layer.s_net, cond_in);
  const std::vector<double> t = net_forward(layer.t_net, cond_in);

  double scale_sum = 0.0;
  for (std::size_t j = 0; j < layer.trans_idx.size(); ++j) {
    const double s = clamp_scale(s_raw[j], layer.scale_clamp);
    const double yb = x[layer.trans_idx[j]] * std::exp(s) + t[j];
    if (!std::isfinite(yb)) throw numeric_error("coupling_forward: non-finite output value");
    y[layer.trans_idx[j]] = yb;
    scale_sum += s;
  }
  for (std::size_t i = 0; i < layer.pass_idx.size(); ++i) y[layer.pass_idx[i]] = cond_in[i];
  logdet = scale_sum;
}

void coupling_inverse_backward(const CouplingLayer& layer, CouplingTape& tape,
                               std::span<const double> g_x, std::span<double> g_y,
                               NetGradients& s_grads, NetGradients& t_grads) {
  const std::size_t n_pass = layer.pass_idx.size();
  const std::size_t n_trans = layer.trans_idx.size();
  tape.ds.resize(n_trans);
  tape.dt.resize(n_trans);
  for (std::size_t j = 0; j < n_trans; ++j) {
    const double gb = g_x[layer.trans_idx[j]];
    const double dyb = gb * tape.exp_neg_s[j];
    tape.dt[j] = -dyb;
    // d/ds of x_B contributes -gb * x_B; the layer's logdet term -sum(s)
    // contributes -1. Then chain through the tanh clamp.
    const double th = tape.s_clamped[j] / layer.scale_clamp;
    tape.ds[j] = (-gb * tape.out_trans[j] - 1.0) * (1.0 - th * th);
    g_y[layer.trans_idx[j]] = dyb;
  }
  const std::vector<double> d_cond_s = net_backward(layer.s_net, tape.s_tape, tape.ds, s_grads);
  const std::vector<double> d_cond_t = net_backward(layer.t_net, tape.t_tape, tape.dt, t_grads);
  for (std::size_t i = 0; i < n_pass; ++i) {
    g_y[layer.pass_idx[i]] = g_x[layer.pass_idx[i]] + d_cond_s[i] + d_cond_t[i];
  }
}

}  // namespace flowood
