#pragma once

#include <cstddef>

// Internal dispatch table shared by the kernel backends.

namespace flowood::kernels::detail {

struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, const double*, double*);
  void (*matvec_t)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*ger)(double*, std::size_t, std::size_t, const double*, const double*);
  void (*adam_update)(double*, const double*, double*, double*, std::size_t, double, double,
                      double, double, double, double);
};

const Ops& scalar_ops();

#if FLOWOOD_HAVE_AVX2
const Ops& avx2_ops();
bool avx2_available();
#endif

}  // namespace flowood::kernels::detail
