#include "c2pc/kernels/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include <omp.h>

namespace c2pc::kernels {

void configure_threads_from_env() {
  const char* env = std::getenv("C2PC_THREADS");
  if (env == nullptr || *env == '\0') return;
  try {
    const int cap = std::stoi(env);
    if (cap >= 1) omp_set_num_threads(std::min(cap, omp_get_num_procs()));
  } catch (const std::exception&) {
    // Ignore malformed values; the OpenMP default stays in effect.
  }
}

int max_threads() { return omp_get_max_threads(); }

void set_max_threads(int n) { omp_set_num_threads(std::max(1, n)); }

}  // namespace c2pc::kernels
