#pragma once

#include <cstddef>

// Numeric kernels behind the dense-network and flow arithmetic. Every
// operation has a scalar reference implementation; on x86-64 an AVX2+FMA
// variant is selected at runtime when the CPU supports it. The backend can
// be forced programmatically or with FLOWOOD_KERNELS=scalar|avx2, which the
// equivalence tests use to compare variants against each other.

namespace flowood::kernels {

enum class Backend { scalar = 0, avx2 = 1 };

Backend active_backend();
bool backend_supported(Backend backend);
// Switches the dispatch table; returns false (and leaves it unchanged) when
// the requested backend is not available on this CPU/build.
bool set_backend(Backend backend);
const char* backend_name(Backend backend);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);

// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
// x *= a
void scale(double a, double* x, std::size_t n);
// y = W x + bias   (W row-major rows x cols; bias may be nullptr)
void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x,
            const double* bias, double* y);
// dx = W^T dy      (dx overwritten)
void matvec_t(const double* w, std::size_t rows, std::size_t cols, const double* dy, double* dx);
// W += dy x^T
void ger(double* w, std::size_t rows, std::size_t cols, const double* dy, const double* x);
// In-place Adam update. inv_bias1/2 are the precomputed bias-correction
// factors 1/(1-beta1^t) and 1/(1-beta2^t). Elementwise, so the scalar and
// SIMD variants agree bit-for-bit.
void adam_update(double* params, const double* grads, double* m, double* v, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double inv_bias1,
                 double inv_bias2);

}  // namespace flowood::kernels
