#pragma once

#include <cstddef>

namespace c2pc::kernels {

// Elementwise transcendental maps over arrays, vectorised through the C library's SIMD
// math routines where available. Results agree with std::exp / std::erf to a few ulp
// and are deterministic on a given machine. `out` may alias `in`.
void exp_array(const double* in, double* out, std::size_t n);
void erf_array(const double* in, double* out, std::size_t n);

}  // namespace c2pc::kernels
