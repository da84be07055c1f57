#pragma once

namespace c2pc::kernels {

// Applies the C2PC_THREADS cap (if set) to the OpenMP runtime. Safe to call repeatedly.
void configure_threads_from_env();

int max_threads();
void set_max_threads(int n);

}  // namespace c2pc::kernels
