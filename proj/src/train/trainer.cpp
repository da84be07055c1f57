#include "c2pc/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "c2pc/errors.hpp"
#include "c2pc/log.hpp"
#include "c2pc/loss/loss.hpp"
#include "c2pc/model/checkpoint.hpp"

namespace c2pc::train {
namespace {

constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kBatchesFile = "batches.jsonl";

// Independent generator per (run seed, epoch, purpose).
enum class Stream : std::uint32_t { Shuffle = 1, Dropout = 2 };

std::mt19937_64 stream(std::uint64_t seed, std::size_t epoch, Stream purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

nlohmann::json without_epochs(nlohmann::json j) {
  j.erase("epochs");
  return j;
}

std::vector<std::size_t> param_sizes(const model::Model& m) {
  std::vector<std::size_t> sizes;
  for (const auto& [name, t] : m.params().tensors()) sizes.push_back(t.numel());
  return sizes;
}

}  // namespace

nlohmann::json to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},
          {"lr", m.lr},
          {"train_loss", m.train_loss},
          {"train_chamfer", m.train_chamfer},
          {"val_chamfer", m.val_chamfer},
          {"wall_ms", m.wall_ms}};
}

EpochMetrics epoch_metrics_from_json(const nlohmann::json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<std::size_t>();
  m.lr = j.at("lr").get<double>();
  m.train_loss = j.at("train_loss").get<double>();
  m.train_chamfer = j.at("train_chamfer").get<double>();
  m.val_chamfer = j.at("val_chamfer").get<double>();
  m.wall_ms = j.at("wall_ms").get<double>();
  return m;
}

double mean_chamfer(const model::Model& model, const std::vector<csi::Example>& set) {
  if (set.empty()) throw ConfigError("mean_chamfer: empty set");
  dm::NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& ex : set) sum += loss::chamfer(model.forward(ex.input), ex.target).item();
  return sum / static_cast<double>(set.size());
}

Trainer::Trainer(model::ModelConfig model_config, TrainConfig config, std::filesystem::path out_dir)
    : Trainer(model::Model(model_config, config.seed), config, std::move(out_dir), false) {}

Trainer::Trainer(model::Model model, TrainConfig config, std::filesystem::path out_dir, bool append)
    : model_(std::move(model)), config_(config), out_dir_(std::move(out_dir)) {
  config_.validate();
  state_ = NAdamState::fresh(param_sizes(model_));
  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    if (!append) {
      for (const char* f : {kMetricsFile, kBatchesFile}) {
        std::ofstream truncate(out_dir_ / f, std::ios::trunc);
        if (!truncate) throw DataError("cannot write " + (out_dir_ / f).string());
      }
    }
  }
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, TrainConfig config, std::filesystem::path out_dir) {
  model::CheckpointData data = model::read_checkpoint(checkpoint);
  const auto train_it = data.header.find("train");
  const auto state_it = data.header.find("state");
  if (train_it == data.header.end() || state_it == data.header.end()) {
    throw ConfigError("checkpoint " + checkpoint.string() + " holds no training state (model-only checkpoint)");
  }
  const TrainConfig stored = train_config_from_json(*train_it);
  if (without_epochs(to_json(stored)) != without_epochs(to_json(config))) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was trained with " + to_json(stored).dump() +
                      "; refusing to resume with " + to_json(config).dump());
  }

  auto find = [&](const std::string& name) -> dm::Tensor& {
    auto it = std::find_if(data.tensors.begin(), data.tensors.end(), [&](const auto& nt) { return nt.first == name; });
    if (it == data.tensors.end()) throw ConfigError("checkpoint " + checkpoint.string() + " lacks '" + name + "'");
    return it->second;
  };
  std::vector<dm::NamedTensor> params;
  for (const auto& entry : model::parameter_layout(data.config)) {
    dm::Tensor t = find(entry.name);
    t.set_requires_grad(true);
    params.emplace_back(entry.name, t);
  }
  Trainer trainer(model::Model(data.config, model::ModelParams(params)), config, std::move(out_dir), true);

  auto& st = trainer.state_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto m = find("nadam.m/" + params[i].first).to_vector();
    const auto v = find("nadam.v/" + params[i].first).to_vector();
    if (m.size() != st.m[i].size() || v.size() != st.v[i].size()) {
      throw ConfigError("checkpoint " + checkpoint.string() + ": optimiser state does not match '" +
                        params[i].first + "'");
    }
    st.m[i] = m;
    st.v[i] = v;
  }
  st.mu_product = find("nadam.mu_product").item();
  const auto& s = *state_it;
  st.step = s.at("step").get<std::uint64_t>();
  trainer.next_epoch_ = s.at("next_epoch").get<std::size_t>();
  if (!s.at("best_val").is_null()) trainer.best_val_ = s.at("best_val").get<double>();
  if (!s.at("best_epoch").is_null()) trainer.best_epoch_ = s.at("best_epoch").get<std::size_t>();
  trainer.last_good_ = checkpoint;
  return trainer;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  std::vector<dm::NamedTensor> tensors = model_.params().tensors();
  const auto& params = model_.params().tensors();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.emplace_back("nadam.m/" + params[i].first, dm::Tensor::from(params[i].second.shape(), state_.m[i]));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.emplace_back("nadam.v/" + params[i].first, dm::Tensor::from(params[i].second.shape(), state_.v[i]));
  }
  tensors.emplace_back("nadam.mu_product", dm::Tensor::scalar(state_.mu_product));
  nlohmann::json state = {{"next_epoch", next_epoch_},
                          {"step", state_.step},
                          {"best_val", std::isfinite(best_val_) ? nlohmann::json(best_val_) : nlohmann::json()},
                          {"best_epoch", best_epoch_ ? nlohmann::json(*best_epoch_) : nlohmann::json()}};
  model::write_checkpoint(path, model_.config(), {{"train", to_json(config_)}, {"state", std::move(state)}}, tensors);
}

void Trainer::append_line(const char* file, const nlohmann::json& record) const {
  if (out_dir_.empty()) return;
  std::ofstream out(out_dir_ / file, std::ios::app);
  out << record.dump() << '\n';
  if (!out) throw DataError("write failed: " + (out_dir_ / file).string());
}

void Trainer::check_datasets(const std::vector<csi::Example>& train_set,
                             const std::vector<csi::Example>& val_set) const {
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty()) throw ConfigError("validation set is empty");
  const std::size_t n = model_.config().points;
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& ex : *set) {
      try {
        model_.check_input(ex.input);
      } catch (const ShapeError& e) {
        throw ConfigError("example '" + ex.id + "' does not fit the model configuration: " + e.what());
      }
      if (ex.target.rank() != 2 || ex.target.dim(0) != n || ex.target.dim(1) != 3) {
        throw ConfigError("example '" + ex.id + "' target is " + dm::to_string(ex.target.shape()) +
                          ", model produces [" + std::to_string(n) + ", 3]");
      }
    }
  }
}

double Trainer::validate(const std::vector<csi::Example>& val_set) const { return mean_chamfer(model_, val_set); }

EpochMetrics Trainer::run_epoch(const std::vector<csi::Example>& train_set, const std::vector<csi::Example>& val_set) {
  check_datasets(train_set, val_set);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t epoch = next_epoch_;
  const double lr = lr_at(epoch, config_);
  auto diverged = [&](const std::string& why) {
    return DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": " + why +
                               (last_good_.empty() ? std::string("; no checkpoint written yet")
                                                   : "; last good checkpoint " + last_good_.string()),
                           last_good_.string());
  };

  auto shuffle_rng = stream(config_.seed, epoch, Stream::Shuffle);
  auto dropout_rng = stream(config_.seed, epoch, Stream::Dropout);
  const model::ForwardOptions opt{.training = true, .rng = &dropout_rng};
  const std::vector<std::size_t> order = shuffled(train_set.size(), shuffle_rng);
  const auto& params = model_.params().tensors();
  const loss::LossConfig loss_config{config_.lambda};

  double loss_sum = 0.0, chamfer_sum = 0.0;
  for (std::size_t b = 0, begin = 0; begin < order.size(); ++b, begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    std::vector<csi::ModelInput> inputs;
    std::vector<dm::Tensor> targets;
    nlohmann::json ids = nlohmann::json::array();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = train_set[order[i]];
      inputs.push_back(ex.input);
      targets.push_back(ex.target);
      ids.push_back(ex.id);
    }
    append_line(kBatchesFile, {{"epoch", epoch}, {"batch", b}, {"ids", std::move(ids)}});

    for (const auto& [name, t] : params) dm::Tensor(t).zero_grad();
    double loss_value = 0.0, chamfer_value = 0.0;
    try {
      const std::vector<dm::Tensor> preds = model_.forward(inputs, opt);
      const dm::Tensor loss = loss::batch_total_loss(preds, targets, model_.transform(), loss_config, &chamfer_value);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw diverged("non-finite loss");
      loss.backward();
    } catch (const NonFiniteError& e) {
      throw diverged(e.what());
    }
    if (config_.grad_clip > 0.0) clip_grad_norm(params, config_.grad_clip);
    nadam_step(params, state_, lr, config_.nadam);
    const double count = static_cast<double>(end - begin);
    loss_sum += loss_value * count;
    chamfer_sum += chamfer_value * count;
  }

  EpochMetrics m;
  m.epoch = epoch;
  m.lr = lr;
  m.train_loss = loss_sum / static_cast<double>(train_set.size());
  m.train_chamfer = chamfer_sum / static_cast<double>(train_set.size());
  try {
    m.val_chamfer = validate(val_set);
  } catch (const NonFiniteError& e) {
    throw diverged(e.what());
  }
  if (!std::isfinite(m.val_chamfer)) throw diverged("non-finite validation Chamfer");

  next_epoch_ = epoch + 1;
  if (m.val_chamfer < best_val_) {
    best_val_ = m.val_chamfer;
    best_epoch_ = epoch;
    if (!out_dir_.empty()) save_checkpoint(out_dir_ / "best.ckpt");
  }
  if (!out_dir_.empty()) {
    save_checkpoint(out_dir_ / "last.ckpt");
    last_good_ = out_dir_ / "last.ckpt";
  }
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  append_line(kMetricsFile, to_json(m));
  log_info("epoch " + std::to_string(epoch) + " lr " + std::to_string(lr) + " train_loss " +
           std::to_string(m.train_loss) + " val_chamfer " + std::to_string(m.val_chamfer));
  return m;
}

std::vector<EpochMetrics> Trainer::fit(const std::vector<csi::Example>& train_set,
                                       const std::vector<csi::Example>& val_set) {
  check_datasets(train_set, val_set);
  std::vector<EpochMetrics> history;
  while (next_epoch_ < config_.epochs) history.push_back(run_epoch(train_set, val_set));
  return history;
}

}  // namespace c2pc::train
