#include "c2pc/train/optim.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "c2pc/errors.hpp"
#include "c2pc/log.hpp"

namespace c2pc::train {
namespace {

bool finite_all(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void NAdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("nadam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("nadam beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("nadam eps must be positive");
  if (!(momentum_decay >= 0.0)) throw ConfigError("nadam momentum_decay must be non-negative");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (step_size == 0) throw ConfigError("step_size must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  nadam.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"epochs", c.epochs},
          {"step_size", c.step_size},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"seed", c.seed},
          {"grad_clip", c.grad_clip},
          {"beta1", c.nadam.beta1},
          {"beta2", c.nadam.beta2},
          {"eps", c.nadam.eps},
          {"momentum_decay", c.nadam.momentum_decay}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training configuration must be a JSON object");
  TrainConfig c;
  const std::pair<const char*, double*> reals[] = {
      {"lr0", &c.lr0},           {"gamma", &c.gamma},         {"lambda", &c.lambda},
      {"grad_clip", &c.grad_clip}, {"beta1", &c.nadam.beta1}, {"beta2", &c.nadam.beta2},
      {"eps", &c.nadam.eps},     {"momentum_decay", &c.nadam.momentum_decay}};
  const std::pair<const char*, std::size_t*> counts[] = {
      {"epochs", &c.epochs}, {"step_size", &c.step_size}, {"batch_size", &c.batch_size}};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& [name, dst] : reals) {
      if (key != name) continue;
      if (!value.is_number()) throw ConfigError("train." + key + " must be a number");
      *dst = value.get<double>();
      known = true;
    }
    for (const auto& [name, dst] : counts) {
      if (key != name) continue;
      if (!value.is_number_unsigned()) throw ConfigError("train." + key + " must be a non-negative integer");
      *dst = value.get<std::size_t>();
      known = true;
    }
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("train.seed must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
      known = true;
    }
    if (!known) throw ConfigError("unknown training configuration key '" + key + "'");
  }
  c.validate();
  return c;
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  double lr = config.lr0;
  for (std::size_t k = epoch / config.step_size; k > 0; --k) lr *= config.gamma;
  return lr;
}

NAdamState NAdamState::fresh(std::span<const std::size_t> sizes) {
  NAdamState s;
  for (std::size_t n : sizes) {
    s.m.emplace_back(n, 0.0);
    s.v.emplace_back(n, 0.0);
  }
  return s;
}

bool nadam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                NAdamState& state, double lr, const NAdamConfig& config) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("nadam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) +
                     " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size() ||
        state.v[i].size() != params[i].size()) {
      throw ShapeError("nadam_step: size mismatch for parameter " + std::to_string(i));
    }
  }
  if (!(lr > 0.0)) throw ConfigError("nadam_step: learning rate must be positive");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!finite_all(grads[i])) {
      log_warning("non-finite gradient in parameter " + std::to_string(i) + "; optimiser step " +
                  std::to_string(state.step + 1) + " skipped");
      return false;
    }
  }

  const double b1 = config.beta1, b2 = config.beta2;
  const double t = static_cast<double>(state.step + 1);
  const double mu = b1 * (1.0 - 0.5 * std::pow(0.96, t * config.momentum_decay));
  const double mu_next = b1 * (1.0 - 0.5 * std::pow(0.96, (t + 1.0) * config.momentum_decay));
  const double mu_product = state.mu_product * mu;
  const double bias2 = 1.0 - std::pow(b2, t);
  const double grad_coef = lr * (1.0 - mu) / (1.0 - mu_product);
  const double momentum_coef = lr * mu_next / (1.0 - mu_product * mu_next);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double denom = std::sqrt(v[j] / bias2) + config.eps;
      w[j] -= grad_coef * g[j] / denom;
      w[j] -= momentum_coef * m[j] / denom;
    }
  }
  state.mu_product = mu_product;
  ++state.step;
  return true;
}

bool nadam_step(const std::vector<dm::NamedTensor>& params, NAdamState& state, double lr, const NAdamConfig& config) {
  std::vector<std::span<double>> values;
  std::vector<std::span<const double>> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (const auto& [name, t] : params) {
    dm::Tensor handle = t;
    values.push_back(handle.mutable_data());
    grads.push_back(handle.grad());
  }
  return nadam_step(values, grads, state, lr, config);
}

double clip_grad_norm(const std::vector<dm::NamedTensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : std::as_const(t).grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (const auto& [name, t] : params) {
      dm::Tensor handle = t;
      for (double& g : handle.grad()) g *= scale;
    }
  }
  return norm;
}

}  // namespace c2pc::train
