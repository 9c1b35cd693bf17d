#include "flowood/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"

namespace flowood {
namespace {

double default_gamma(std::span<const double> data, std::size_t n, std::size_t dim) {
  // 1 / (dim * mean per-coordinate variance); falls back to 1 when the data
  // has no spread at all.
  double var_sum = 0.0;
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    kernels::axpy(1.0, data.data() + i * dim, mean.data(), dim);
  }
  kernels::scale(1.0 / static_cast<double>(n), mean.data(), dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = data.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = row[j] - mean[j];
      var_sum += d * d;
    }
  }
  const double mean_var = var_sum / static_cast<double>(n * dim);
  if (!(mean_var > 1e-12)) return 1.0;
  return 1.0 / (static_cast<double>(dim) * mean_var);
}

}  // namespace

OcSvmModel ocsvm_fit(std::span<const double> data, std::size_t n, std::size_t dim,
                     const OcSvmFitOptions& options) {
  if (n < 2) throw data_error("ocsvm_fit: need at least 2 training points");
  if (dim == 0 || data.size() != n * dim)
    throw data_error("ocsvm_fit: data size does not match n x dim");
  if (!(options.nu > 0.0 && options.nu <= 1.0))
    throw usage_error("ocsvm_fit: nu must be in (0, 1]");
  if (!(options.tol > 0.0)) throw usage_error("ocsvm_fit: tol must be positive");

  const double gamma = options.gamma > 0.0 ? options.gamma : default_gamma(data, n, dim);
  const double box = 1.0 / (options.nu * static_cast<double>(n));
  const std::size_t max_iter =
      options.max_iter > 0 ? options.max_iter : std::max<std::size_t>(100000, 100 * n);

  std::vector<double> sq_norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    sq_norms[i] = kernels::sumsq(data.data() + i * dim, dim);
  }
  auto kernel_column = [&](std::size_t j, std::vector<double>& col) {
    const double* xj = data.data() + j * dim;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 =
          sq_norms[i] + sq_norms[j] - 2.0 * kernels::dot(data.data() + i * dim, xj, dim);
      col[i] = std::exp(-gamma * std::max(0.0, d2));
    }
  };

  // Uniform start satisfies the box and the equality constraint for any nu
  // and respects symmetric problems (at nu = 1 it is already the solution).
  std::vector<double> alpha(n, 1.0 / static_cast<double>(n));
  std::vector<double> grad(n, 0.0);  // K alpha
  std::vector<double> col(n), col_up(n), col_dn(n);
  for (std::size_t j = 0; j < n; ++j) {
    kernel_column(j, col);
    kernels::axpy(alpha[j], col.data(), grad.data(), n);
  }

  double residual = 0.0;
  bool converged = false;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::size_t up = n, dn = n;
    double up_val = std::numeric_limits<double>::infinity();
    double dn_val = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] < box && grad[i] < up_val) {
        up_val = grad[i];
        up = i;
      }
      if (alpha[i] > 0.0 && grad[i] > dn_val) {
        dn_val = grad[i];
        dn = i;
      }
    }
    if (up == n || dn == n) {
      converged = true;  // no movable pair left
      break;
    }
    residual = dn_val - up_val;
    if (residual < options.tol) {
      converged = true;
      break;
    }
    kernel_column(up, col_up);
    kernel_column(dn, col_dn);
    const double curvature = col_up[up] + col_dn[dn] - 2.0 * col_up[dn];
    double step = curvature > 1e-15 ? residual / curvature
                                    : std::numeric_limits<double>::infinity();
    step = std::min(step, std::min(box - alpha[up], alpha[dn]));
    alpha[up] += step;
    alpha[dn] -= step;
    kernels::axpy(step, col_up.data(), grad.data(), n);
    kernels::axpy(-step, col_dn.data(), grad.data(), n);
  }
  if (!converged) {
    throw numeric_error("ocsvm_fit: no convergence after " + std::to_string(max_iter) +
                        " iterations (KKT residual " + std::to_string(residual) + ")");
  }

  // rho from margin support vectors, falling back to the bound midpoint.
  double rho_sum = 0.0;
  std::size_t rho_count = 0;
  const double margin_eps = box * 1e-8;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > margin_eps && alpha[i] < box - margin_eps) {
      rho_sum += grad[i];
      ++rho_count;
    }
  }
  double rho;
  if (rho_count > 0) {
    rho = rho_sum / static_cast<double>(rho_count);
  } else {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] > 0.0) lo = std::max(lo, grad[i]);
      if (alpha[i] < box) hi = std::min(hi, grad[i]);
    }
    if (!std::isfinite(lo)) lo = hi;
    if (!std::isfinite(hi)) hi = lo;
    rho = 0.5 * (lo + hi);
  }

  OcSvmModel model;
  model.dim = dim;
  model.gamma = gamma;
  model.nu = options.nu;
  model.rho = rho;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > 1e-12) {
      model.alphas.push_back(alpha[i]);
      const double* row = data.data() + i * dim;
      model.support_vectors.insert(model.support_vectors.end(), row, row + dim);
    }
  }
  return model;
}

double ocsvm_score(const OcSvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim)
    throw data_error("ocsvm_score: input dim " + std::to_string(x.size()) +
                     " does not match model dim " + std::to_string(model.dim));
  double acc = 0.0;
  std::vector<double> diff(model.dim);
  for (std::size_t i = 0; i < model.n_support(); ++i) {
    const double* sv = model.support_vectors.data() + i * model.dim;
    for (std::size_t j = 0; j < model.dim; ++j) diff[j] = x[j] - sv[j];
    acc += model.alphas[i] * std::exp(-model.gamma * kernels::sumsq(diff.data(), model.dim));
  }
  return acc - model.rho;
}

}  // namespace flowood
