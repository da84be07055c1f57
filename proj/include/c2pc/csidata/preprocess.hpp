#pragma once

#include <span>
#include <vector>

#include "c2pc/csidata/csi_sample.hpp"

namespace c2pc::csi {

/// Phase unwrapping of a sequence: every successive difference is mapped into
/// (-pi, pi] by adding a multiple of 2*pi, and the corrections accumulate.
std::vector<double> unwrap_phase(std::span<const double> wrapped);

/// Wraps an angle into (-pi, pi].
double wrap_phase(double radians);

inline constexpr double kVarianceFloor = 1e-8;

/// Unwraps phase along the subcarrier axis (per antenna and time slice), standardises
/// amplitude and unwrapped phase per sample to zero mean / unit variance, and reshapes
/// A x S x 2 x T into F x 2 x T with F = A * S.
ModelInput preprocess(const CsiSample& sample);

}  // namespace c2pc::csi
