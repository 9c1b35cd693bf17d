#include "flowood/base_dist.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"

namespace flowood {
namespace {

constexpr std::uint64_t kAcceptStreamTag = 0x5EEDACCE;

struct ResamplingCoeffs {
  double c_accept;  // (1 - (1-Z)^T) / Z
  double c_floor;   // (1-Z)^T
};

ResamplingCoeffs coeffs(const ResamplingBase& base) {
  if (!(base.z_ema > 0.0))
    throw state_error("resampling base: normalizer Z must be positive (got " +
                      std::to_string(base.z_ema) + ")");
  const double z = base.z_ema;
  const double floor = std::pow(1.0 - z, static_cast<double>(base.trunc));
  return {(1.0 - floor) / z, floor};
}

void check_accept_net(const ResamplingBase& base) {
  if (base.accept_net.input_dim() != base.dim || base.accept_net.output_dim() != 1)
    throw usage_error("resampling base: acceptance network must map dim -> 1");
}

}  // namespace

double gaussian_log_prob(std::span<const double> z) {
  for (double v : z) {
    if (!std::isfinite(v)) throw numeric_error("gaussian_log_prob: non-finite input");
  }
  return -0.5 * static_cast<double>(z.size()) * kLn2Pi -
         0.5 * kernels::sumsq(z.data(), z.size());
}

void gaussian_sample(std::size_t dim, Rng& rng, std::span<double> out) {
  (void)dim;
  rng.fill_normal(out);
}

Matrix gaussian_sample(std::size_t dim, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw usage_error("gaussian_sample: need n >= 1");
  Matrix out(n, dim);
  Rng rng(seed);
  rng.fill_normal(out.values);
  return out;
}

double resampling_acceptance(const ResamplingBase& base, std::span<const double> z) {
  check_accept_net(base);
  return net_forward(base.accept_net, z)[0];
}

double resampling_log_prob(const ResamplingBase& base, std::span<const double> z) {
  const ResamplingCoeffs c = coeffs(base);
  const double alpha = resampling_acceptance(base, z);
  return std::log(c.c_accept * alpha + c.c_floor) + gaussian_log_prob(z);
}

double resampling_update_z(ResamplingBase& base, std::size_t n_mc, Rng& rng) {
  if (n_mc == 0) throw usage_error("resampling_update_z: need n_mc >= 1");
  check_accept_net(base);
  std::vector<double> z(base.dim);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    rng.fill_normal(z);
    sum += net_forward(base.accept_net, z)[0];
  }
  const double mean = sum / static_cast<double>(n_mc);
  const double updated = base.ema_decay * base.z_ema + (1.0 - base.ema_decay) * mean;
  base.z_ema = std::clamp(updated, 1e-6, 1.0);
  return base.z_ema;
}

double resampling_update_z(ResamplingBase& base, std::size_t n_mc, std::uint64_t seed) {
  Rng rng(seed);
  return resampling_update_z(base, n_mc, rng);
}

Matrix resampling_sample(const ResamplingBase& base, std::size_t n, std::uint64_t seed) {
  if (base.trunc < 1) throw usage_error("resampling_sample: truncation count must be >= 1");
  if (n == 0) throw usage_error("resampling_sample: need n >= 1");
  check_accept_net(base);
  Matrix out(n, base.dim);
  Rng proposal_rng(seed);
  Rng accept_rng = Rng(seed).fork(kAcceptStreamTag);
  std::vector<double> z(base.dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t trial = 1; trial <= base.trunc; ++trial) {
      proposal_rng.fill_normal(z);
      if (trial == base.trunc) break;  // unconditional acceptance on the last trial
      const double alpha = net_forward(base.accept_net, z)[0];
      if (accept_rng.uniform() < alpha) break;
    }
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

std::size_t base_dim(const BaseDistribution& base) {
  return std::visit([](const auto& b) { return b.dim; }, base);
}

double base_log_prob(const BaseDistribution& base, std::span<const double> z) {
  if (const auto* g = std::get_if<GaussianBase>(&base)) {
    (void)g;
    return gaussian_log_prob(z);
  }
  return resampling_log_prob(std::get<ResamplingBase>(base), z);
}

Matrix base_sample(const BaseDistribution& base, std::size_t n, std::uint64_t seed) {
  if (const auto* g = std::get_if<GaussianBase>(&base)) return gaussian_sample(g->dim, n, seed);
  return resampling_sample(std::get<ResamplingBase>(base), n, seed);
}

double base_log_prob_backward(const BaseDistribution& base, std::span<const double> z,
                              std::span<double> g_z, NetGradients* accept_grads,
                              GradientTape& tape) {
  const double gauss = gaussian_log_prob(z);
  for (std::size_t i = 0; i < z.size(); ++i) g_z[i] = -z[i];
  if (std::holds_alternative<GaussianBase>(base)) return gauss;

  const auto& rb = std::get<ResamplingBase>(base);
  const ResamplingCoeffs c = coeffs(rb);
  const double alpha = net_forward(rb.accept_net, z, tape)[0];
  const double density_mix = c.c_accept * alpha + c.c_floor;
  // d log(mix)/d alpha, propagated through the acceptance net both to its
  // parameters and to z.
  const double cotangent[1] = {c.c_accept / density_mix};
  NetGradients discard;
  NetGradients& sink = accept_grads ? *accept_grads : discard;
  std::vector<double> dz = net_backward(rb.accept_net, tape, cotangent, sink);
  for (std::size_t i = 0; i < z.size(); ++i) g_z[i] += dz[i];
  return std::log(density_mix) + gauss;
}

}  // namespace flowood
