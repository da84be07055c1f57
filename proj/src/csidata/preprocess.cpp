#include "c2pc/csidata/preprocess.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "c2pc/log.hpp"

namespace c2pc::csi {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Standardises values in place; returns false when the variance had to be floored.
bool standardize(std::vector<double>& values) {
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  var /= static_cast<double>(values.size());
  const bool floored = var < kVarianceFloor;
  const double inv = 1.0 / std::sqrt(floored ? kVarianceFloor : var);
  for (double& v : values) v = (v - mu) * inv;
  return !floored;
}

}  // namespace

double wrap_phase(double radians) {
  // ceil((x - pi) / 2pi) is the multiple of 2pi that lands x in (-pi, pi].
  return radians - kTwoPi * std::ceil((radians - std::numbers::pi) / kTwoPi);
}

std::vector<double> unwrap_phase(std::span<const double> wrapped) {
  std::vector<double> out(wrapped.begin(), wrapped.end());
  double correction = 0.0;
  for (std::size_t i = 1; i < wrapped.size(); ++i) {
    const double d = wrapped[i] - wrapped[i - 1];
    correction += wrap_phase(d) - d;
    out[i] = wrapped[i] + correction;
  }
  return out;
}

ModelInput preprocess(const CsiSample& sample) {
  validate(sample);
  const std::size_t A = sample.antennas, S = sample.subcarriers, T = sample.slices;
  const std::size_t n = sample.size();

  std::vector<double> amplitude(sample.amplitude.begin(), sample.amplitude.end());
  std::vector<double> phase(n);
  std::vector<double> seq(S);
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) seq[s] = sample.phase[sample.offset(a, s, t)];
      const auto unwrapped = unwrap_phase(seq);
      for (std::size_t s = 0; s < S; ++s) phase[sample.offset(a, s, t)] = unwrapped[s];
    }
  }
  if (!standardize(amplitude)) {
    log_warning("CSI amplitude has (near) zero variance; variance floored at 1e-8 (frame " +
                std::to_string(sample.meta.frame) + ")");
  }
  if (!standardize(phase)) {
    log_warning("CSI phase has (near) zero variance; variance floored at 1e-8 (frame " +
                std::to_string(sample.meta.frame) + ")");
  }

  const std::size_t F = A * S;
  std::vector<double> features(F * 2 * T);
  ModelInput input;
  input.antenna_index.resize(F);
  input.subcarrier_index.resize(F);
  for (std::size_t i = 0; i < F; ++i) {
    const std::size_t a = i / S, s = i % S;
    input.antenna_index[i] = a;
    input.subcarrier_index[i] = s;
    for (std::size_t t = 0; t < T; ++t) {
      features[(i * 2 + 0) * T + t] = amplitude[sample.offset(a, s, t)];
      features[(i * 2 + 1) * T + t] = phase[sample.offset(a, s, t)];
    }
  }
  input.features = dm::Tensor::from({F, 2, T}, std::move(features));
  return input;
}

}  // namespace c2pc::csi
