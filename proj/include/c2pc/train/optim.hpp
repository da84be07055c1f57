#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/diffmath/grad_check.hpp"

namespace c2pc::train {

struct NAdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum_decay = 0.004;  // psi in mu_t = beta1 * (1 - 0.5 * 0.96^(t * psi))

  void validate() const;
  bool operator==(const NAdamConfig&) const = default;
};

struct TrainConfig {
  double lr0 = 1e-4;
  std::size_t epochs = 50;
  std::size_t step_size = 10;  // epochs between learning-rate decays
  double gamma = 0.5;
  std::size_t batch_size = 16;
  double lambda = 0.001;       // feature-transform regulariser weight
  std::uint64_t seed = 0;      // parameter init, shuffling and dropout all derive from it
  double grad_clip = 0.0;      // global gradient-norm cap; 0 disables
  NAdamConfig nadam;

  /// Throws ConfigError unless lr0 > 0, 0 < gamma <= 1, step_size, batch_size >= 1,
  /// lambda >= 0, grad_clip >= 0 and the NAdam settings are sane.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr0 * gamma^floor(epoch / step_size), epochs counted from 0.
double lr_at(std::size_t epoch, const TrainConfig& config);

/// First/second moments per parameter tensor plus the momentum-schedule product.
struct NAdamState {
  std::uint64_t step = 0;
  double mu_product = 1.0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  /// Zeroed moments matching `sizes`.
  static NAdamState fresh(std::span<const std::size_t> sizes);
  bool operator==(const NAdamState&) const = default;
};

/// One NAdam update (Nesterov-accelerated Adam with the 0.96^(t psi) momentum schedule):
///   t += 1; mu_t = b1 (1 - 0.5 * 0.96^(t psi)); mu_{t+1} likewise; prod *= mu_t
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2;  d = sqrt(v / (1 - b2^t)) + eps
///   w -= lr (1 - mu_t) / (1 - prod) * g / d + lr mu_{t+1} / (1 - prod mu_{t+1}) * m / d
/// If any gradient entry is non-finite nothing changes (the state included), a warning is
/// logged and false is returned.
bool nadam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                NAdamState& state, double lr, const NAdamConfig& config);

/// Same update applied to every tensor's value using its accumulated gradient.
bool nadam_step(const std::vector<dm::NamedTensor>& params, NAdamState& state, double lr, const NAdamConfig& config);

/// Scales all gradients so their global L2 norm is at most `max_norm`. Returns the norm before scaling.
double clip_grad_norm(const std::vector<dm::NamedTensor>& params, double max_norm);

}  // namespace c2pc::train
