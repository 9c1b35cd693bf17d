#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace flowood {

// Adam optimizer state over one flat parameter vector.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update: params -= lr * m_hat / (sqrt(v_hat) + eps).
// Throws a numeric error naming the first offending index when grads contain
// non-finite values.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

}  // namespace flowood
