#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/csidata/csi_sample.hpp"
#include "c2pc/csidata/point_cloud.hpp"
#include "c2pc/diffmath/grad_check.hpp"
#include "c2pc/diffmath/tensor.hpp"

namespace c2pc::model {

struct ModelConfig {
  std::size_t antennas = 3;     // A
  std::size_t subcarriers = 114;  // S
  std::size_t slices = 10;      // T
  std::size_t embed_dim = 512;  // E, also the feature-transform size
  std::size_t heads = 4;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 4;
  std::size_t points = 1200;    // N
  std::size_t ffn_dim = 0;      // 0 means 4 * E
  std::size_t kernel_size = 0;  // temporal conv width; 0 means T
  double dropout = 0.0;

  std::size_t pairs() const { return antennas * subcarriers; }
  std::size_t ffn() const { return ffn_dim ? ffn_dim : 4 * embed_dim; }
  std::size_t kernel() const { return kernel_size ? kernel_size : slices; }

  /// Throws ConfigError when the combination is unusable.
  void validate() const;

  static ModelConfig tiny();  // A=2, S=4, T=5, E=8, 2 heads, 2+2 layers, N=16

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class ParamInit { Uniform, Normal, Zero, One, Identity };

struct ParamSpec {
  std::string name;
  dm::Shape shape;
  ParamInit init;
  std::size_t fan_in;  // Uniform only
};

/// Names, shapes and initialisers of every parameter, in checkpoint order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

/// Every learnable tensor, in a fixed order, addressable by name.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(std::vector<dm::NamedTensor> tensors);

  /// Random initialisation: attention/FFN/projection/conv weights from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), embeddings and point queries from N(0, 0.02),
  /// biases and layer-norm shifts zero, layer-norm gains one, transform identity.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  const dm::Tensor& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<dm::NamedTensor>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<dm::NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ForwardOptions {
  bool training = false;             // enables dropout
  std::mt19937_64* rng = nullptr;    // dropout masks; required when training with dropout > 0
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }

  /// Per-pair temporal convolution: features [F x 2 x T] -> H [F x E].
  dm::Tensor temporal_encode(const csi::ModelInput& input) const;
  /// H[i] + Embedding_a[antenna(i)] + Embedding_s[subcarrier(i)].
  dm::Tensor add_positional(const dm::Tensor& h, std::span<const std::size_t> antenna_index,
                            std::span<const std::size_t> subcarrier_index) const;
  /// Post-norm transformer encoder over the F pair tokens.
  dm::Tensor encode(const dm::Tensor& h, const ForwardOptions& opt = {}) const;
  /// Decoder over the learned point queries with cross-attention to `memory`,
  /// followed by the feature transform: returns G' = G * T_f, [N x E].
  dm::Tensor decode(const dm::Tensor& memory, const ForwardOptions& opt = {}) const;
  /// G' * W + b -> [N x 3].
  dm::Tensor project_points(const dm::Tensor& features) const;

  /// Throws ShapeError if the input does not match the configuration.
  void check_input(const csi::ModelInput& input) const;

  /// One sample through the full pipeline, [N x 3].
  dm::Tensor forward(const csi::ModelInput& input, const ForwardOptions& opt = {}) const;
  /// Every input is shape-checked before any computation starts.
  std::vector<dm::Tensor> forward(std::span<const csi::ModelInput> batch, const ForwardOptions& opt = {}) const;

  /// The learned feature transform T_f.
  const dm::Tensor& transform() const;

  /// Gradient-free inference returning a point cloud.
  PointCloud infer(const csi::ModelInput& input) const;

 private:
  dm::Tensor attention(const std::string& prefix, const dm::Tensor& x, const dm::Tensor& context) const;
  dm::Tensor feed_forward(const std::string& prefix, const dm::Tensor& x) const;
  dm::Tensor residual_norm(const std::string& ln, const dm::Tensor& x, const dm::Tensor& update,
                           const ForwardOptions& opt) const;

  ModelConfig config_;
  ModelParams params_;
};

}  // namespace c2pc::model
