#include "flowood/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"

namespace flowood::kernels {
namespace detail {
namespace {

// Scalar reference implementations. Compiled with -ffp-contract=off so the
// arithmetic is plain IEEE mul/add; the SIMD variants are checked against
// these in the equivalence tests.

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void matvec_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                   const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias ? bias[r] : 0.0;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_scalar(const double* w, std::size_t rows, std::size_t cols, const double* dy,
                     double* dx) {
  std::memset(dx, 0, cols * sizeof(double));
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dx[c] += g * row[c];
  }
}

void ger_scalar(double* w, std::size_t rows, std::size_t cols, const double* dy,
                const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

void adam_update_scalar(double* params, const double* grads, double* m, double* v, std::size_t n,
                        double lr, double beta1, double beta2, double eps, double inv_bias1,
                        double inv_bias2) {
  const double one_minus_b1 = 1.0 - beta1;
  const double one_minus_b2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const double num = lr * (m[i] * inv_bias1);
    const double den = std::sqrt(v[i] * inv_bias2) + eps;
    params[i] -= num / den;
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {dot_scalar,      sum_scalar, sumsq_scalar, axpy_scalar, scale_scalar,
                          matvec_scalar,   matvec_t_scalar, ger_scalar, adam_update_scalar};
  return ops;
}

}  // namespace detail

namespace {

std::atomic<const detail::Ops*> g_ops{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

Backend detect_default() {
#if FLOWOOD_HAVE_AVX2
  if (const char* env = std::getenv("FLOWOOD_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && detail::avx2_available()) return Backend::avx2;
    return Backend::scalar;
  }
  if (detail::avx2_available()) return Backend::avx2;
#else
  if (const char* env = std::getenv("FLOWOOD_KERNELS")) (void)env;
#endif
  return Backend::scalar;
}

const detail::Ops* ops_for(Backend backend) {
#if FLOWOOD_HAVE_AVX2
  if (backend == Backend::avx2) return &detail::avx2_ops();
#endif
  (void)backend;
  return &detail::scalar_ops();
}

const detail::Ops& ops() {
  const detail::Ops* p = g_ops.load(std::memory_order_acquire);
  if (!p) {
    const Backend b = detect_default();
    p = ops_for(b);
    g_backend.store(b, std::memory_order_relaxed);
    g_ops.store(p, std::memory_order_release);
  }
  return *p;
}

}  // namespace

Backend active_backend() {
  ops();
  return g_backend.load(std::memory_order_relaxed);
}

bool backend_supported(Backend backend) {
  if (backend == Backend::scalar) return true;
#if FLOWOOD_HAVE_AVX2
  if (backend == Backend::avx2) return detail::avx2_available();
#endif
  return false;
}

bool set_backend(Backend backend) {
  if (!backend_supported(backend)) return false;
  g_backend.store(backend, std::memory_order_relaxed);
  g_ops.store(ops_for(backend), std::memory_order_release);
  return true;
}

const char* backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) { return ops().dot(a, b, n); }
double sum(const double* x, std::size_t n) { return ops().sum(x, n); }
double sumsq(const double* x, std::size_t n) { return ops().sumsq(x, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { ops().axpy(a, x, y, n); }
void scale(double a, double* x, std::size_t n) { ops().scale(a, x, n); }

void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x,
            const double* bias, double* y) {
  ops().matvec(w, rows, cols, x, bias, y);
}

void matvec_t(const double* w, std::size_t rows, std::size_t cols, const double* dy, double* dx) {
  ops().matvec_t(w, rows, cols, dy, dx);
}

void ger(double* w, std::size_t rows, std::size_t cols, const double* dy, const double* x) {
  ops().ger(w, rows, cols, dy, x);
}

void adam_update(double* params, const double* grads, double* m, double* v, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double inv_bias1,
                 double inv_bias2) {
  ops().adam_update(params, grads, m, v, n, lr, beta1, beta2, eps, inv_bias1, inv_bias2);
}

}  // namespace flowood::kernels
