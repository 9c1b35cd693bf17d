#include "flowood/flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"
#include "flowood/threading.hpp"

namespace flowood {
namespace {

constexpr std::size_t kGradChunk = 8;

void check_point_dim(const FlowModel& model, std::size_t n, const char* what) {
  if (n != model.dim)
    throw data_error(std::string(what) + ": vector length " + std::to_string(n) +
                     " does not match model dim " + std::to_string(model.dim));
}

template <typename Fn>
void for_each_param_block(const FlowModel& model, Fn&& fn) {
  for (const auto& layer : model.layers) {
    for (const auto& dense : layer.s_net.layers) {
      fn(dense.weights);
      fn(dense.bias);
    }
    for (const auto& dense : layer.t_net.layers) {
      fn(dense.weights);
      fn(dense.bias);
    }
  }
  if (const auto* rb = std::get_if<ResamplingBase>(&model.base)) {
    for (const auto& dense : rb->accept_net.layers) {
      fn(dense.weights);
      fn(dense.bias);
    }
  }
}

template <typename Fn>
void for_each_param_block(FlowModel& model, Fn&& fn) {
  for (auto& layer : model.layers) {
    for (auto& dense : layer.s_net.layers) {
      fn(dense.weights);
      fn(dense.bias);
    }
    for (auto& dense : layer.t_net.layers) {
      fn(dense.weights);
      fn(dense.bias);
    }
  }
  if (auto* rb = std::get_if<ResamplingBase>(&model.base)) {
    for (auto& dense : rb->accept_net.layers) {
      fn(dense.weights);
      fn(dense.bias);
    }
  }
}

}  // namespace

void validate_flow_model(const FlowModel& model) {
  if (model.dim < 2) throw data_error("flow model: dim must be >= 2");
  if (base_dim(model.base) != model.dim)
    throw data_error("flow model: base distribution dim does not match model dim");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (layer.dim() != model.dim)
      throw data_error("flow model: layer " + std::to_string(l) + " mask length mismatch");
    layer.validate();
    for (const auto& net : {&layer.s_net, &layer.t_net}) {
      for (const auto& dense : net->layers) {
        for (double w : dense.weights)
          if (!std::isfinite(w))
            throw data_error("flow model: non-finite weight in layer " + std::to_string(l));
        for (double b : dense.bias)
          if (!std::isfinite(b))
            throw data_error("flow model: non-finite bias in layer " + std::to_string(l));
      }
    }
  }
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    const auto& a = model.layers[l].mask;
    const auto& b = model.layers[l + 1].mask;
    for (std::size_t i = 0; i < model.dim; ++i) {
      if (a[i] && b[i])
        throw data_error("flow model: coordinate " + std::to_string(i) +
                         " passes through layers " + std::to_string(l) + " and " +
                         std::to_string(l + 1) + " untouched");
    }
  }
}

FlowModel make_flow_model(std::size_t dim, std::size_t num_layers, std::size_t conditioner_depth,
                          std::size_t conditioner_width, double scale_clamp,
                          BaseDistribution base, Rng& rng) {
  FlowModel model;
  model.dim = dim;
  model.base = std::move(base);
  model.layers.reserve(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    model.layers.push_back(make_coupling_layer(half_mask(dim, l % 2 == 1), conditioner_depth,
                                               conditioner_width, scale_clamp, rng));
  }
  validate_flow_model(model);
  return model;
}

LogDensityResult flow_log_prob(const FlowModel& model, std::span<const double> a) {
  check_point_dim(model, a.size(), "flow_log_prob");
  std::vector<double> cur(a.begin(), a.end());
  std::vector<double> next(model.dim);
  double logdet_total = 0.0;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    double ld = 0.0;
    try {
      coupling_inverse(model.layers[l], cur, next, ld);
    } catch (const Error& e) {
      throw Error(e.category(),
                  "flow_log_prob: coupling layer " + std::to_string(l) + ": " + e.what());
    }
    cur.swap(next);
    logdet_total += ld;
  }
  LogDensityResult result;
  result.base_term = base_log_prob(model.base, cur);
  result.logdet_term = logdet_total;
  result.total = result.base_term + result.logdet_term;
  result.latent = std::move(cur);
  return result;
}

void FlowGradients::resize_for(const FlowModel& model) {
  s_grads.resize(model.layers.size());
  t_grads.resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    s_grads[l].resize_for(model.layers[l].s_net);
    t_grads[l].resize_for(model.layers[l].t_net);
  }
  if (const auto* rb = std::get_if<ResamplingBase>(&model.base)) {
    accept_grads.resize_for(rb->accept_net);
  } else {
    accept_grads = NetGradients{};
  }
}

void FlowGradients::zero() {
  for (auto& g : s_grads) g.zero();
  for (auto& g : t_grads) g.zero();
  accept_grads.zero();
}

void FlowGradients::add(const FlowGradients& other) {
  for (std::size_t l = 0; l < s_grads.size(); ++l) {
    s_grads[l].add(other.s_grads[l]);
    t_grads[l].add(other.t_grads[l]);
  }
  if (!accept_grads.empty()) accept_grads.add(other.accept_grads);
}

void FlowGradients::scale(double factor) {
  for (auto& g : s_grads) g.scale(factor);
  for (auto& g : t_grads) g.scale(factor);
  accept_grads.scale(factor);
}

double flow_log_prob_backward(const FlowModel& model, std::span<const double> a,
                              FlowWorkspace& ws, FlowGradients& grads) {
  check_point_dim(model, a.size(), "flow_log_prob_backward");
  if (grads.empty() || grads.s_grads.size() != model.layers.size()) grads.resize_for(model);
  const std::size_t n_layers = model.layers.size();
  ws.tapes.resize(n_layers);
  ws.x_cur.assign(a.begin(), a.end());
  ws.x_next.resize(model.dim);

  double logdet_total = 0.0;
  for (std::size_t l = n_layers; l-- > 0;) {
    double ld = 0.0;
    try {
      coupling_inverse(model.layers[l], ws.x_cur, ws.x_next, ld, ws.tapes[l]);
    } catch (const Error& e) {
      throw Error(e.category(),
                  "flow gradient: coupling layer " + std::to_string(l) + ": " + e.what());
    }
    ws.x_cur.swap(ws.x_next);
    logdet_total += ld;
  }

  ws.g_cur.resize(model.dim);
  ws.g_next.resize(model.dim);
  const double base_term =
      base_log_prob_backward(model.base, ws.x_cur, ws.g_cur,
                             grads.accept_grads.empty() ? nullptr : &grads.accept_grads,
                             ws.accept_tape);

  for (std::size_t l = 0; l < n_layers; ++l) {
    coupling_inverse_backward(model.layers[l], ws.tapes[l], ws.g_cur, ws.g_next, grads.s_grads[l],
                              grads.t_grads[l]);
    ws.g_cur.swap(ws.g_next);
  }
  return base_term + logdet_total;
}

double BatchGradient::evaluate(const FlowModel& model,
                               std::span<const std::span<const double>> batch,
                               FlowGradients& out) {
  if (batch.empty()) throw usage_error("flow gradient: batch must be non-empty");
  const std::size_t n = batch.size();
  const std::size_t n_chunks = (n + kGradChunk - 1) / kGradChunk;
  if (partials_.size() < n_chunks) partials_.resize(n_chunks);
  if (workspaces_.size() < n_chunks) workspaces_.resize(n_chunks);
  log_probs_.assign(n, 0.0);

  parallel_for(n_chunks, [&](std::size_t c) {
    FlowGradients& part = partials_[c];
    if (part.empty()) part.resize_for(model);
    part.zero();
    const std::size_t begin = c * kGradChunk;
    const std::size_t end = std::min(begin + kGradChunk, n);
    for (std::size_t i = begin; i < end; ++i) {
      try {
        log_probs_[i] = flow_log_prob_backward(model, batch[i], workspaces_[c], part);
      } catch (const Error& e) {
        throw Error(e.category(), "batch position " + std::to_string(i) + ": " + e.what());
      }
    }
  });

  double ll_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(log_probs_[i]))
      throw numeric_error("flow gradient: non-finite log-likelihood at batch position " +
                          std::to_string(i));
    ll_sum += log_probs_[i];
  }

  if (out.empty()) out.resize_for(model);
  out.zero();
  for (std::size_t c = 0; c < n_chunks; ++c) out.add(partials_[c]);
  out.scale(-1.0 / static_cast<double>(n));
  return -ll_sum / static_cast<double>(n);
}

double flow_nll_gradient(const FlowModel& model, std::span<const std::span<const double>> batch,
                         FlowGradients& out) {
  BatchGradient ctx;
  return ctx.evaluate(model, batch, out);
}

Matrix flow_sample(const FlowModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw usage_error("flow_sample: need n >= 1");
  Matrix samples = base_sample(model.base, n, seed);
  std::vector<double> next(model.dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = samples.row(i);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      double ld = 0.0;
      try {
        coupling_forward(model.layers[l], row, next, ld);
      } catch (const Error& e) {
        throw Error(e.category(),
                    "flow_sample: coupling layer " + std::to_string(l) + ": " + e.what());
      }
      std::copy(next.begin(), next.end(), row.begin());
    }
  }
  return samples;
}

std::size_t parameter_count(const FlowModel& model) {
  std::size_t n = 0;
  for_each_param_block(model, [&](const std::vector<double>& block) { n += block.size(); });
  return n;
}

void gather_parameters(const FlowModel& model, std::span<double> flat) {
  std::size_t offset = 0;
  for_each_param_block(model, [&](const std::vector<double>& block) {
    std::copy(block.begin(), block.end(), flat.begin() + offset);
    offset += block.size();
  });
  if (offset != flat.size()) throw usage_error("gather_parameters: flat size mismatch");
}

void scatter_parameters(FlowModel& model, std::span<const double> flat) {
  std::size_t offset = 0;
  for_each_param_block(model, [&](std::vector<double>& block) {
    std::copy(flat.begin() + offset, flat.begin() + offset + block.size(), block.begin());
    offset += block.size();
  });
  if (offset != flat.size()) throw usage_error("scatter_parameters: flat size mismatch");
}

void gather_gradients(const FlowGradients& grads, std::span<double> flat) {
  std::size_t offset = 0;
  auto emit = [&](const std::vector<double>& block) {
    std::copy(block.begin(), block.end(), flat.begin() + offset);
    offset += block.size();
  };
  for (std::size_t l = 0; l < grads.s_grads.size(); ++l) {
    for (std::size_t d = 0; d < grads.s_grads[l].weight_grads.size(); ++d) {
      emit(grads.s_grads[l].weight_grads[d]);
      emit(grads.s_grads[l].bias_grads[d]);
    }
    for (std::size_t d = 0; d < grads.t_grads[l].weight_grads.size(); ++d) {
      emit(grads.t_grads[l].weight_grads[d]);
      emit(grads.t_grads[l].bias_grads[d]);
    }
  }
  for (std::size_t d = 0; d < grads.accept_grads.weight_grads.size(); ++d) {
    emit(grads.accept_grads.weight_grads[d]);
    emit(grads.accept_grads.bias_grads[d]);
  }
  if (offset != flat.size()) throw usage_error("gather_gradients: flat size mismatch");
}

}  // namespace flowood
