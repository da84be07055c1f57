#include "c2pc/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "c2pc/diffmath/ops.hpp"
#include "c2pc/errors.hpp"

namespace c2pc::model {
namespace {

std::string layer(const char* stack, std::size_t l) { return std::string(stack) + "." + std::to_string(l) + "."; }

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(antennas, "antennas");
  positive(subcarriers, "subcarriers");
  positive(slices, "slices");
  positive(embed_dim, "embed_dim");
  positive(heads, "heads");
  positive(encoder_layers, "encoder_layers");
  positive(decoder_layers, "decoder_layers");
  positive(points, "points");
  if (embed_dim % heads != 0) {
    throw ConfigError("model.embed_dim (" + std::to_string(embed_dim) + ") must be divisible by model.heads (" +
                      std::to_string(heads) + ")");
  }
  if (kernel() > slices) throw ConfigError("model.kernel_size must not exceed model.slices");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.antennas = 2;
  c.subcarriers = 4;
  c.slices = 5;
  c.embed_dim = 8;
  c.heads = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.points = 16;
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"antennas", c.antennas},     {"subcarriers", c.subcarriers},       {"slices", c.slices},
          {"embed_dim", c.embed_dim},   {"heads", c.heads},                   {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers}, {"points", c.points},         {"ffn_dim", c.ffn_dim},
          {"kernel_size", c.kernel_size}, {"dropout", c.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model configuration must be a JSON object");
  ModelConfig c;
  const std::pair<const char*, std::size_t*> sizes[] = {
      {"antennas", &c.antennas},       {"subcarriers", &c.subcarriers},       {"slices", &c.slices},
      {"embed_dim", &c.embed_dim},     {"heads", &c.heads},                   {"encoder_layers", &c.encoder_layers},
      {"decoder_layers", &c.decoder_layers}, {"points", &c.points},         {"ffn_dim", &c.ffn_dim},
      {"kernel_size", &c.kernel_size}};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& [name, dst] : sizes) {
      if (key == name) {
        if (!value.is_number_unsigned()) throw ConfigError("model." + key + " must be a non-negative integer");
        *dst = value.get<std::size_t>();
        known = true;
      }
    }
    if (key == "dropout") {
      if (!value.is_number()) throw ConfigError("model.dropout must be a number");
      c.dropout = value.get<double>();
      known = true;
    }
    if (!known) throw ConfigError("unknown model configuration key '" + key + "'");
  }
  c.validate();
  return c;
}

ModelParams::ModelParams(std::vector<dm::NamedTensor> tensors) : tensors_(std::move(tensors)) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!index_.emplace(tensors_[i].first, i).second) {
      throw ConfigError("duplicate parameter name '" + tensors_[i].first + "'");
    }
  }
}

const dm::Tensor& ModelParams::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter '" + name + "'");
  return tensors_[it->second].second;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> out;
  const std::size_t e = c.embed_dim, f = c.ffn();
  auto add = [&](std::string name, dm::Shape shape, ParamInit init, std::size_t fan_in = 0) {
    out.push_back({std::move(name), std::move(shape), init, fan_in});
  };
  auto attention = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) add(p + w, {e, e}, ParamInit::Uniform, e);
  };
  auto norm = [&](const std::string& p) {
    add(p + "gamma", {e}, ParamInit::One);
    add(p + "beta", {e}, ParamInit::Zero);
  };
  auto ffn = [&](const std::string& p) {
    add(p + "w1", {e, f}, ParamInit::Uniform, e);
    add(p + "b1", {f}, ParamInit::Zero);
    add(p + "w2", {f, e}, ParamInit::Uniform, f);
    add(p + "b2", {e}, ParamInit::Zero);
  };

  add("temporal.kernel", {c.kernel(), 2, e}, ParamInit::Uniform, c.kernel() * 2);
  add("temporal.bias", {e}, ParamInit::Zero);
  add("pos.antenna", {c.antennas, e}, ParamInit::Normal);
  add("pos.subcarrier", {c.subcarriers, e}, ParamInit::Normal);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = layer("enc", l);
    attention(p + "attn.");
    norm(p + "ln1.");
    ffn(p + "ffn.");
    norm(p + "ln2.");
  }
  add("queries", {c.points, e}, ParamInit::Normal);
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    const std::string p = layer("dec", l);
    attention(p + "self.");
    norm(p + "ln1.");
    attention(p + "cross.");
    norm(p + "ln2.");
    ffn(p + "ffn.");
    norm(p + "ln3.");
  }
  add("transform", {e, e}, ParamInit::Identity);
  add("proj.weight", {e, 3}, ParamInit::Uniform, e);
  add("proj.bias", {3}, ParamInit::Zero);
  return out;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<dm::NamedTensor> out;
  for (const auto& entry : parameter_layout(config)) {
    std::vector<double> v(dm::numel(entry.shape), 0.0);
    switch (entry.init) {
      case ParamInit::Uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(entry.fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& x : v) x = u(rng);
        break;
      }
      case ParamInit::Normal: {
        std::normal_distribution<double> g(0.0, 0.02);
        for (auto& x : v) x = g(rng);
        break;
      }
      case ParamInit::Zero:
        break;
      case ParamInit::One:
        std::fill(v.begin(), v.end(), 1.0);
        break;
      case ParamInit::Identity:
        for (std::size_t i = 0; i < entry.shape[0]; ++i) v[i * entry.shape[0] + i] = 1.0;
        break;
    }
    out.emplace_back(entry.name, dm::Tensor::from(entry.shape, std::move(v), true));
  }
  return ModelParams(std::move(out));
}

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(config), params_(ModelParams::init(config, seed)) {}

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.tensors().size()) {
    throw ConfigError("parameter set has " + std::to_string(params_.tensors().size()) + " tensors, configuration needs " +
                      std::to_string(layout.size()));
  }
  for (const auto& entry : layout) {
    if (!params_.contains(entry.name)) throw ConfigError("missing parameter '" + entry.name + "'");
    if (params_[entry.name].shape() != entry.shape) {
      throw ConfigError("parameter '" + entry.name + "' has shape " + dm::to_string(params_[entry.name].shape()) +
                        ", expected " + dm::to_string(entry.shape));
    }
  }
}

const dm::Tensor& Model::transform() const { return params_["transform"]; }

void Model::check_input(const csi::ModelInput& in) const {
  const dm::Shape want{config_.pairs(), 2, config_.slices};
  if (!in.features.defined() || in.features.shape() != want) {
    throw ShapeError("model input features must be " + dm::to_string(want) + ", got " +
                     (in.features.defined() ? dm::to_string(in.features.shape()) : std::string("nothing")));
  }
  if (in.antenna_index.size() != config_.pairs() || in.subcarrier_index.size() != config_.pairs()) {
    throw ShapeError("model input index lists must have " + std::to_string(config_.pairs()) + " entries");
  }
  for (std::size_t i = 0; i < config_.pairs(); ++i) {
    if (in.antenna_index[i] >= config_.antennas || in.subcarrier_index[i] >= config_.subcarriers) {
      throw ShapeError("model input pair " + std::to_string(i) + " has an out-of-range antenna/subcarrier index");
    }
  }
}

dm::Tensor Model::temporal_encode(const csi::ModelInput& input) const {
  const auto& x = input.features;
  if (x.rank() != 3 || x.dim(1) != 2 || x.dim(2) != config_.slices) {
    throw ShapeError("temporal_encode: features must be [F x 2 x " + std::to_string(config_.slices) + "], got " +
                     dm::to_string(x.shape()));
  }
  const std::size_t f = x.dim(0), t = x.dim(2);
  // [F x 2 x T] -> [F x T x 2], the layout conv1d_valid expects.
  std::vector<double> seq(f * t * 2);
  const auto xv = x.data();
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t s = 0; s < t; ++s) seq[(i * t + s) * 2 + c] = xv[(i * 2 + c) * t + s];
  const dm::Tensor y =
      dm::conv1d_valid(dm::Tensor::from({f, t, 2}, std::move(seq)), params_["temporal.kernel"], params_["temporal.bias"]);
  if (y.dim(1) == 1) return dm::reshape(y, {f, config_.embed_dim});
  return dm::mean_axis1(y);
}

dm::Tensor Model::add_positional(const dm::Tensor& h, std::span<const std::size_t> antenna_index,
                                 std::span<const std::size_t> subcarrier_index) const {
  return dm::add(h, dm::add(dm::gather_rows(params_["pos.antenna"], antenna_index),
                            dm::gather_rows(params_["pos.subcarrier"], subcarrier_index)));
}

dm::Tensor Model::attention(const std::string& p, const dm::Tensor& x, const dm::Tensor& context) const {
  const dm::Tensor q = dm::matmul(x, params_[p + "wq"]);
  const dm::Tensor k = dm::matmul(context, params_[p + "wk"]);
  const dm::Tensor v = dm::matmul(context, params_[p + "wv"]);
  return dm::matmul(dm::multi_head_attention(q, k, v, config_.heads), params_[p + "wo"]);
}

dm::Tensor Model::feed_forward(const std::string& p, const dm::Tensor& x) const {
  const dm::Tensor hidden = dm::gelu(dm::add_bias(dm::matmul(x, params_[p + "w1"]), params_[p + "b1"]));
  return dm::add_bias(dm::matmul(hidden, params_[p + "w2"]), params_[p + "b2"]);
}

dm::Tensor Model::residual_norm(const std::string& ln, const dm::Tensor& x, dm::Tensor const& update,
                                const ForwardOptions& opt) const {
  dm::Tensor u = update;
  if (opt.training && config_.dropout > 0.0) {
    if (!opt.rng) throw ConfigError("dropout during training needs an RNG");
    u = dm::dropout(u, config_.dropout, *opt.rng);
  }
  return dm::layer_norm(dm::add(x, u), params_[ln + "gamma"], params_[ln + "beta"]);
}

dm::Tensor Model::encode(const dm::Tensor& h, const ForwardOptions& opt) const {
  dm::Tensor x = h;
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = layer("enc", l);
    x = residual_norm(p + "ln1.", x, attention(p + "attn.", x, x), opt);
    x = residual_norm(p + "ln2.", x, feed_forward(p + "ffn.", x), opt);
  }
  return x;
}

dm::Tensor Model::decode(const dm::Tensor& memory, const ForwardOptions& opt) const {
  dm::Tensor g = params_["queries"];
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = layer("dec", l);
    g = residual_norm(p + "ln1.", g, attention(p + "self.", g, g), opt);
    g = residual_norm(p + "ln2.", g, attention(p + "cross.", g, memory), opt);
    g = residual_norm(p + "ln3.", g, feed_forward(p + "ffn.", g), opt);
  }
  return dm::matmul(g, transform());
}

dm::Tensor Model::project_points(const dm::Tensor& features) const {
  return dm::add_bias(dm::matmul(features, params_["proj.weight"]), params_["proj.bias"]);
}

dm::Tensor Model::forward(const csi::ModelInput& input, const ForwardOptions& opt) const {
  check_input(input);
  const dm::Tensor h = add_positional(temporal_encode(input), input.antenna_index, input.subcarrier_index);
  return project_points(decode(encode(h, opt), opt));
}

std::vector<dm::Tensor> Model::forward(std::span<const csi::ModelInput> batch, const ForwardOptions& opt) const {
  for (const auto& in : batch) check_input(in);
  std::vector<dm::Tensor> out;
  out.reserve(batch.size());
  for (const auto& in : batch) out.push_back(forward(in, opt));
  return out;
}

PointCloud Model::infer(const csi::ModelInput& input) const {
  dm::NoGradGuard guard;
  return cloud_from_tensor(forward(input));
}

}  // namespace c2pc::model
