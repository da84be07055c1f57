#include "c2pc/kernels/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include <omp.h>

namespace c2pc::kernels {
namespace {

typedef double v8d __attribute__((vector_size(64)));

constexpr std::size_t MR = 6;
constexpr std::size_t NR = 16;
constexpr std::size_t KC = 256;
constexpr std::size_t MC = 96;
constexpr std::size_t NC = 2048;

// Packed A panel: MR rows interleaved, a[k * MR + r]. Rows past `rows` are zero.
void pack_a(MatrixView a, std::size_t row0, std::size_t rows, std::size_t k0, std::size_t kc, double* dst) {
  for (std::size_t ir = 0; ir < rows; ir += MR) {
    const std::size_t mr = std::min(MR, rows - ir);
    double* panel = dst + ir * kc;
    for (std::size_t k = 0; k < kc; ++k) {
      std::size_t r = 0;
      for (; r < mr; ++r) panel[k * MR + r] = a.at(row0 + ir + r, k0 + k);
      for (; r < MR; ++r) panel[k * MR + r] = 0.0;
    }
  }
}

// Packed B panel: NR columns interleaved, b[k * NR + c]. Columns past `cols` are zero.
void pack_b(MatrixView b, std::size_t k0, std::size_t kc, std::size_t col0, std::size_t cols, double* dst) {
  const std::size_t panels = (cols + NR - 1) / NR;
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < panels; ++p) {
    const std::size_t jr = p * NR;
    const std::size_t nr = std::min(NR, cols - jr);
    double* panel = dst + jr * kc;
    for (std::size_t k = 0; k < kc; ++k) {
      std::size_t c = 0;
      for (; c < nr; ++c) panel[k * NR + c] = b.at(k0 + k, col0 + jr + c);
      for (; c < NR; ++c) panel[k * NR + c] = 0.0;
    }
  }
}

inline void micro_kernel(std::size_t kc, const double* __restrict a, const double* __restrict b, double* c,
                         std::size_t ldc, std::size_t mr, std::size_t nr, bool overwrite) {
  v8d acc[MR][2] = {};
  for (std::size_t k = 0; k < kc; ++k) {
    v8d b0, b1;
    std::memcpy(&b0, b + k * NR, sizeof(v8d));
    std::memcpy(&b1, b + k * NR + 8, sizeof(v8d));
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = a[k * MR + r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < mr; ++r) {
    double row[NR];
    std::memcpy(row, &acc[r][0], sizeof(v8d));
    std::memcpy(row + 8, &acc[r][1], sizeof(v8d));
    double* out = c + r * ldc;
    if (overwrite) {
      for (std::size_t j = 0; j < nr; ++j) out[j] = row[j];
    } else {
      for (std::size_t j = 0; j < nr; ++j) out[j] += row[j];
    }
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, MatrixView a, MatrixView b, double* c, std::size_t ldc,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
    }
    return;
  }

  thread_local std::vector<double> b_pack;
  b_pack.resize(KC * ((std::min(NC, n) + NR - 1) / NR) * NR);

  for (std::size_t jc = 0; jc < n; jc += NC) {
    const std::size_t nc = std::min(NC, n - jc);
    for (std::size_t pc = 0; pc < k; pc += KC) {
      const std::size_t kc = std::min(KC, k - pc);
      // The first k-panel stores instead of accumulating, so C needs no zero fill.
      const bool overwrite = !accumulate && pc == 0;
      pack_b(b, pc, kc, jc, nc, b_pack.data());
      const double* bp = b_pack.data();
      const std::size_t row_blocks = (m + MC - 1) / MC;
#pragma omp parallel for schedule(static)
      for (std::size_t blk = 0; blk < row_blocks; ++blk) {
        thread_local std::vector<double> a_pack;
        a_pack.resize(MC * KC);
        const std::size_t ic = blk * MC;
        const std::size_t mc = std::min(MC, m - ic);
        pack_a(a, ic, mc, pc, kc, a_pack.data());
        for (std::size_t jr = 0; jr < nc; jr += NR) {
          for (std::size_t ir = 0; ir < mc; ir += MR) {
            micro_kernel(kc, a_pack.data() + ir * kc, bp + jr * kc, c + (ic + ir) * ldc + jc + jr, ldc,
                         std::min(MR, mc - ir), std::min(NR, nc - jr), overwrite);
          }
        }
      }
    }
  }
}

void gemm_reference(std::size_t m, std::size_t n, std::size_t k, MatrixView a, MatrixView b, double* c,
                    std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a.at(i, p) * b.at(p, j);
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + sum : sum;
    }
  }
}

}  // namespace c2pc::kernels
