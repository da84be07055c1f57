#include "c2pc/diffmath/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "c2pc/errors.hpp"

namespace c2pc::dm {
namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  const double value = f().item();
  if (!std::isfinite(value)) throw NonFiniteError("grad_check: objective evaluated to a non-finite value");
  return value;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params, double eps,
                      double tolerance) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-4]");

  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor y = f();
  if (!std::isfinite(y.item())) throw NonFiniteError("grad_check: objective evaluated to a non-finite value");
  y.backward();

  GradReport report;
  for (auto& [name, t] : params) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    ParamGradError entry{name};
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate(f);
      values[i] = saved - eps;
      const double minus = evaluate(f);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = relative_error(analytic[i], numeric);
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace c2pc::dm
