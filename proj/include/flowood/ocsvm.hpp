#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowood {

// One-class SVM (nu formulation, RBF kernel) fitted on in-distribution data
// only. Higher decision values mean more in-distribution, so scores feed the
// same ROC/AUROC machinery as the flow.
struct OcSvmModel {
  std::size_t dim = 0;
  std::vector<double> support_vectors;  // row-major [n_sv x dim]
  std::vector<double> alphas;           // aligned with support_vectors
  double rho = 0.0;
  double gamma = 0.0;
  double nu = 0.0;

  std::size_t n_support() const { return alphas.size(); }
};

struct OcSvmFitOptions {
  double nu = 0.5;
  double gamma = 0.0;  // <= 0 selects 1 / (dim * mean per-coordinate variance)
  double tol = 1e-6;
  std::size_t max_iter = 0;  // 0 selects max(100000, 100 * n)
};

// Solves the dual  min 1/2 a^T K a  s.t.  0 <= a_i <= 1/(nu n), sum a = 1
// by max-violating-pair coordinate updates. Throws a numeric error with the
// residual when the tolerance is not reached within max_iter.
OcSvmModel ocsvm_fit(std::span<const double> data, std::size_t n, std::size_t dim,
                     const OcSvmFitOptions& options);

double ocsvm_score(const OcSvmModel& model, std::span<const double> x);

}  // namespace flowood
