#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowood/errors.hpp"
#include "flowood/ocsvm.hpp"
#include "flowood/rng.hpp"

using namespace flowood;

namespace {

std::vector<double> rbf_kernel_matrix(const std::vector<double>& x, std::size_t n,
                                      std::size_t dim, double gamma) {
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = x[i * dim + c] - x[j * dim + c];
        d2 += d * d;
      }
      k[i * n + j] = std::exp(-gamma * d2);
    }
  }
  return k;
}

double dual_objective(const std::vector<double>& k, const std::vector<double>& alpha,
                      std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) acc += alpha[i] * alpha[j] * k[i * n + j];
  }
  return 0.5 * acc;
}

// projection onto { 0 <= a <= box, sum a = 1 } by bisection on the shift
void project_simplex_box(std::vector<double>& a, double box) {
  double lo = -2.0, hi = 2.0;
  for (double v : a) {
    lo = std::min(lo, v - box - 1.0);
    hi = std::max(hi, v + 1.0);
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double lambda = 0.5 * (lo + hi);
    double total = 0.0;
    for (double v : a) total += std::clamp(v - lambda, 0.0, box);
    if (total > 1.0) lo = lambda;
    else hi = lambda;
  }
  const double lambda = 0.5 * (lo + hi);
  for (double& v : a) v = std::clamp(v - lambda, 0.0, box);
}

// brute-force projected-gradient reference solve of the one-class dual
std::vector<double> reference_solve(const std::vector<double>& k, std::size_t n, double box) {
  std::vector<double> alpha(n, 1.0 / static_cast<double>(n));
  project_simplex_box(alpha, box);
  std::vector<double> grad(n);
  const double step = 0.5 / static_cast<double>(n);
  for (int iter = 0; iter < 200000; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double g = 0.0;
      for (std::size_t j = 0; j < n; ++j) g += k[i * n + j] * alpha[j];
      grad[i] = g;
    }
    for (std::size_t i = 0; i < n; ++i) alpha[i] -= step * grad[i];
    project_simplex_box(alpha, box);
  }
  return alpha;
}

// full alpha vector reconstructed from the sparse model (zeros elsewhere)
double model_objective(const OcSvmModel& model) {
  const std::size_t n = model.n_support();
  const std::vector<double> k =
      rbf_kernel_matrix(model.support_vectors, n, model.dim, model.gamma);
  return dual_objective(k, model.alphas, n);
}

}  // namespace

TEST_CASE("ocsvm_fit: two identical points split mass symmetrically") {
  const std::vector<double> data = {1.0, 2.0, 1.0, 2.0};
  for (double nu : {0.3, 0.5, 1.0}) {
    OcSvmFitOptions opt;
    opt.nu = nu;
    opt.gamma = 1.0;
    const OcSvmModel model = ocsvm_fit(data, 2, 2, opt);
    REQUIRE(model.n_support() == 2);
    CHECK(model.alphas[0] == 0.5);
    CHECK(model.alphas[1] == 0.5);
  }
}

TEST_CASE("ocsvm_fit: nu = 1 forces the uniform solution") {
  Rng rng(121);
  const std::size_t n = 12, dim = 3;
  std::vector<double> data(n * dim);
  for (double& v : data) v = rng.normal();
  OcSvmFitOptions opt;
  opt.nu = 1.0;
  const OcSvmModel model = ocsvm_fit(data, n, dim, opt);
  REQUIRE(model.n_support() == n);
  for (double a : model.alphas) CHECK(a == 1.0 / static_cast<double>(n));
}

TEST_CASE("ocsvm_fit: tiny instances match a brute-force reference solve") {
  Rng rng(122);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t n = 5, dim = 2;
    std::vector<double> data(n * dim);
    for (double& v : data) v = rng.normal() * 1.5;
    OcSvmFitOptions opt;
    opt.nu = 0.4 + 0.1 * static_cast<double>(rep % 3);
    opt.gamma = 0.8;
    opt.tol = 1e-9;
    const OcSvmModel model = ocsvm_fit(data, n, dim, opt);

    const double box = 1.0 / (opt.nu * static_cast<double>(n));
    const std::vector<double> k = rbf_kernel_matrix(data, n, dim, opt.gamma);
    const std::vector<double> ref = reference_solve(k, n, box);
    const double obj_ref = dual_objective(k, ref, n);
    const double obj_got = model_objective(model);
    CHECK(obj_got <= obj_ref + 1e-4);
    CHECK(std::fabs(obj_got - obj_ref) < 1e-4);
  }
}

TEST_CASE("ocsvm_fit: dual feasibility at solver exit") {
  Rng rng(123);
  const std::size_t n = 60, dim = 4;
  std::vector<double> data(n * dim);
  for (double& v : data) v = rng.normal();
  OcSvmFitOptions opt;
  opt.nu = 0.35;
  const OcSvmModel model = ocsvm_fit(data, n, dim, opt);
  const double box = 1.0 / (opt.nu * static_cast<double>(n));
  double total = 0.0;
  for (double a : model.alphas) {
    CHECK(a >= -1e-12);
    CHECK(a <= box + 1e-12);
    total += a;
  }
  CHECK(std::fabs(total - 1.0) < 1e-6);
}

TEST_CASE("ocsvm_score: kernel decay away from the training cluster") {
  Rng rng(124);
  const std::size_t n = 30, dim = 2;
  std::vector<double> data(n * dim);
  for (double& v : data) v = rng.normal() * 0.3;  // tight cluster at the origin
  OcSvmFitOptions opt;
  const OcSvmModel model = ocsvm_fit(data, n, dim, opt);
  const std::vector<double> center = {0.0, 0.0};
  const std::vector<double> far = {10.0, 10.0};
  CHECK(ocsvm_score(model, center) > ocsvm_score(model, far));
}

TEST_CASE("ocsvm_score: gamma -> 0 limit gives constant 1 - rho") {
  Rng rng(125);
  const std::size_t n = 10, dim = 2;
  std::vector<double> data(n * dim);
  for (double& v : data) v = rng.normal();
  OcSvmFitOptions opt;
  opt.gamma = 1e-14;
  const OcSvmModel model = ocsvm_fit(data, n, dim, opt);
  double alpha_total = 0.0;
  for (double a : model.alphas) alpha_total += a;
  const std::vector<double> x1 = {5.0, -3.0};
  const std::vector<double> x2 = {-2.0, 7.0};
  CHECK(ocsvm_score(model, x1) ==
        doctest::Approx(alpha_total - model.rho).epsilon(1e-9));
  CHECK(ocsvm_score(model, x1) == doctest::Approx(ocsvm_score(model, x2)).epsilon(1e-9));
}

TEST_CASE("ocsvm_score: hand-computed kernel sums on a 5-point toy set") {
  const std::vector<double> data = {0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.5, -0.5};
  OcSvmFitOptions opt;
  opt.nu = 0.5;
  opt.gamma = 0.7;
  const OcSvmModel model = ocsvm_fit(data, 5, 2, opt);
  const std::vector<double> x = {0.25, -0.75};
  double expect = -model.rho;
  for (std::size_t i = 0; i < model.n_support(); ++i) {
    const double dx = x[0] - model.support_vectors[i * 2];
    const double dy = x[1] - model.support_vectors[i * 2 + 1];
    expect += model.alphas[i] * std::exp(-0.7 * (dx * dx + dy * dy));
  }
  CHECK(std::fabs(ocsvm_score(model, x) - expect) < 1e-10);
}

TEST_CASE("ocsvm: translation invariance of scores") {
  Rng rng(126);
  const std::size_t n = 40, dim = 3;
  std::vector<double> data(n * dim);
  for (double& v : data) v = rng.normal();
  OcSvmFitOptions opt;
  opt.gamma = 0.5;  // fixed so both fits solve the same problem
  const OcSvmModel base_model = ocsvm_fit(data, n, dim, opt);

  const std::vector<double> shift = {5.0, -3.0, 2.0};
  std::vector<double> shifted = data;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) shifted[i * dim + c] += shift[c];
  const OcSvmModel shifted_model = ocsvm_fit(shifted, n, dim, opt);

  Rng qrng(127);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> q(dim), q_shifted(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      q[c] = qrng.normal();
      q_shifted[c] = q[c] + shift[c];
    }
    CHECK(std::fabs(ocsvm_score(base_model, q) - ocsvm_score(shifted_model, q_shifted)) < 1e-9);
  }
}

TEST_CASE("ocsvm_fit: argument validation and non-convergence") {
  const std::vector<double> one_point = {1.0, 2.0};
  OcSvmFitOptions opt;
  CHECK_THROWS_AS((void)ocsvm_fit(one_point, 1, 2, opt), Error);
  OcSvmFitOptions bad_nu;
  bad_nu.nu = 1.5;
  const std::vector<double> data = {0.0, 0.0, 1.0, 1.0};
  CHECK_THROWS_AS((void)ocsvm_fit(data, 2, 2, bad_nu), Error);

  Rng rng(128);
  std::vector<double> big(50 * 2);
  for (double& v : big) v = rng.normal();
  OcSvmFitOptions strangled;
  strangled.max_iter = 2;
  strangled.tol = 1e-12;
  try {
    (void)ocsvm_fit(big, 50, 2, strangled);
    FAIL("expected non-convergence");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::numeric);
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}
