#include "c2pc/kernels/vecmath.hpp"

#include <cmath>

// Built with -ffast-math so glibc exposes its SIMD variants of exp/erf to the
// vectoriser. The loops are pure elementwise maps, so no reassociation is involved.

namespace c2pc::kernels {

void exp_array(const double* in, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
}

void erf_array(const double* in, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::erf(in[i]);
}

}  // namespace c2pc::kernels
