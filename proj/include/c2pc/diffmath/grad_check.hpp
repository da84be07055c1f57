#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "c2pc/diffmath/tensor.hpp"

namespace c2pc::dm {

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  bool passed = false;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of the scalar `f` against central differences
/// (f(theta + eps) - f(theta - eps)) / (2 eps), coordinate by coordinate.
///
/// `f` must rebuild its graph from the current values of `params` on every call. The
/// check fails with NonFiniteError if f evaluates to NaN/Inf anywhere.
GradReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params, double eps = 1e-6,
                      double tolerance = 1e-4);

}  // namespace c2pc::dm
