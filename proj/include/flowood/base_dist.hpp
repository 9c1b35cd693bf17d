#pragma once

#include <cstdint>
#include <span>
#include <variant>

#include "flowood/dense_net.hpp"
#include "flowood/matrix.hpp"
#include "flowood/rng.hpp"

namespace flowood {

inline constexpr double kLn2Pi = 1.8378770664093454836;

// Standard isotropic Gaussian N(0, I).
struct GaussianBase {
  std::size_t dim = 0;
};

// Gaussian reshaped by a learned acceptance function through truncated
// rejection sampling. The normalizer Z = E[accept(z)] is tracked as an
// exponential moving average and treated as a constant inside a training
// step.
struct ResamplingBase {
  std::size_t dim = 0;
  DenseNet accept_net;        // dim -> 1, sigmoid output
  std::size_t trunc = 100;    // rejection trials per sample
  double z_ema = 1.0;         // in (0, 1]
  double ema_decay = 0.95;
};

using BaseDistribution = std::variant<GaussianBase, ResamplingBase>;

double gaussian_log_prob(std::span<const double> z);
// n i.i.d. standard-normal rows, deterministic under seed.
Matrix gaussian_sample(std::size_t dim, std::size_t n, std::uint64_t seed);
void gaussian_sample(std::size_t dim, Rng& rng, std::span<double> out);

// accept(z) in (0, 1)
double resampling_acceptance(const ResamplingBase& base, std::span<const double> z);

// log p_T(z) = log[(1 - (1-Z)^T)/Z * accept(z) + (1-Z)^T] + log N(z; 0, I)
double resampling_log_prob(const ResamplingBase& base, std::span<const double> z);

// z_ema <- decay * z_ema + (1-decay) * mean(accept) over n_mc fresh Gaussian
// draws, clamped to [1e-6, 1]. Returns the updated value.
double resampling_update_z(ResamplingBase& base, std::size_t n_mc, Rng& rng);
double resampling_update_z(ResamplingBase& base, std::size_t n_mc, std::uint64_t seed);

// Truncated rejection sampler: up to `trunc` proposals per sample, the last
// accepted unconditionally. Proposals consume the same stream as
// gaussian_sample(seed); acceptance tests draw from a forked stream, so with
// accept == 1 the output equals the plain Gaussian stream bit-for-bit.
Matrix resampling_sample(const ResamplingBase& base, std::size_t n, std::uint64_t seed);

std::size_t base_dim(const BaseDistribution& base);
double base_log_prob(const BaseDistribution& base, std::span<const double> z);
Matrix base_sample(const BaseDistribution& base, std::size_t n, std::uint64_t seed);

// Log density plus gradient with respect to z (overwrites g_z). For the
// resampling base, gradients of the acceptance network parameters are
// accumulated into accept_grads when non-null; `tape` is reusable scratch.
double base_log_prob_backward(const BaseDistribution& base, std::span<const double> z,
                              std::span<double> g_z, NetGradients* accept_grads,
                              GradientTape& tape);

}  // namespace flowood
