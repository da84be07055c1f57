#pragma once

#include <cstddef>

namespace c2pc::kernels {

/// Read-only strided view of a dense matrix. Element (r, c) lives at
/// data[r * row_stride + c * col_stride], so a transpose is just swapped strides.
struct MatrixView {
  const double* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;

  double at(std::size_t r, std::size_t c) const {
    return data[static_cast<std::ptrdiff_t>(r) * row_stride + static_cast<std::ptrdiff_t>(c) * col_stride];
  }
  MatrixView transposed() const { return {data, col_stride, row_stride}; }
};

inline MatrixView row_major(const double* data, std::size_t cols) {
  return {data, static_cast<std::ptrdiff_t>(cols), 1};
}

/// C[m x n] (= or +=) A[m x k] * B[k x n]; C is row-major with leading dimension ldc.
///
/// Packed, register-blocked kernel parallelised with OpenMP over row blocks. Each
/// output element is always accumulated in the same order, so results do not depend
/// on the thread count.
void gemm(std::size_t m, std::size_t n, std::size_t k, MatrixView a, MatrixView b, double* c,
          std::size_t ldc, bool accumulate = false);

/// Serial triple loop. Kept as the reference the packed kernel is tested against.
void gemm_reference(std::size_t m, std::size_t n, std::size_t k, MatrixView a, MatrixView b,
                    double* c, std::size_t ldc, bool accumulate = false);

}  // namespace c2pc::kernels
