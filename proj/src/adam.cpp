#include "flowood/adam.hpp"

#include <cmath>
#include <string>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"

namespace flowood {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw usage_error("adam_step: parameter, gradient and state shapes disagree");
  }
  if (!(lr > 0.0)) throw usage_error("adam_step: learning rate must be positive");

  // sum of squares is non-finite iff some gradient element is (squares are
  // non-negative, so infinities cannot cancel); overflow of genuinely finite
  // values is ruled out by the element scan before throwing.
  if (!std::isfinite(kernels::sumsq(grads.data(), grads.size()))) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        throw numeric_error("adam_step: non-finite gradient at parameter index " +
                            std::to_string(i));
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double inv_bias1 = 1.0 / (1.0 - std::pow(state.beta1, t));
  const double inv_bias2 = 1.0 / (1.0 - std::pow(state.beta2, t));
  kernels::adam_update(params.data(), grads.data(), state.m.data(), state.v.data(), params.size(),
                       lr, state.beta1, state.beta2, state.eps, inv_bias1, inv_bias2);
}

}  // namespace flowood
