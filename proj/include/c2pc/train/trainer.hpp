#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/csidata/dataset.hpp"
#include "c2pc/model/model.hpp"
#include "c2pc/train/optim.hpp"

namespace c2pc::train {

/// One line of metrics.jsonl. `epoch` counts from 0 and is the argument given to lr_at.
struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;     // sample-weighted mean of the batch objective
  double train_chamfer = 0.0;  // the Chamfer part of it
  double val_chamfer = 0.0;    // mean Chamfer over the validation set, no regulariser
  double wall_ms = 0.0;
};

nlohmann::json to_json(const EpochMetrics& m);
EpochMetrics epoch_metrics_from_json(const nlohmann::json& j);

/// Training run over a fixed model configuration. Output directory layout:
///   metrics.jsonl  one EpochMetrics record per epoch
///   batches.jsonl  {"epoch", "batch", "ids"} for every optimiser step
///   last.ckpt      parameters, optimiser state and epoch counter after the latest epoch
///   best.ckpt      the same for the epoch with the lowest validation Chamfer
/// An empty output directory disables all file output.
class Trainer {
 public:
  /// Fresh run: parameters initialised from config.seed; existing logs are truncated.
  Trainer(model::ModelConfig model_config, TrainConfig config, std::filesystem::path out_dir);

  /// Continues from a checkpoint written by a Trainer. `config` may extend `epochs`; every
  /// other training setting must match the checkpoint (ConfigError otherwise). Logs are appended.
  static Trainer resume(const std::filesystem::path& checkpoint, TrainConfig config,
                        std::filesystem::path out_dir);

  /// Runs the remaining epochs up to config.epochs. Throws ConfigError if either set is
  /// empty or does not fit the model, and DivergenceError (naming the last good
  /// checkpoint) if the loss becomes non-finite.
  std::vector<EpochMetrics> fit(const std::vector<csi::Example>& train_set, const std::vector<csi::Example>& val_set);

  /// Exactly one epoch (the next one).
  EpochMetrics run_epoch(const std::vector<csi::Example>& train_set, const std::vector<csi::Example>& val_set);

  /// Model, optimiser state, epoch counter and best-so-far bookkeeping.
  void save_checkpoint(const std::filesystem::path& path) const;

  const model::Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const NAdamState& optimizer() const { return state_; }
  std::size_t next_epoch() const { return next_epoch_; }
  double best_val_chamfer() const { return best_val_; }
  std::optional<std::size_t> best_epoch() const { return best_epoch_; }

 private:
  Trainer(model::Model model, TrainConfig config, std::filesystem::path out_dir, bool append);

  void check_datasets(const std::vector<csi::Example>& train_set, const std::vector<csi::Example>& val_set) const;
  double validate(const std::vector<csi::Example>& val_set) const;
  void append_line(const char* file, const nlohmann::json& record) const;

  model::Model model_;
  TrainConfig config_;
  std::filesystem::path out_dir_;
  NAdamState state_;
  std::size_t next_epoch_ = 0;
  double best_val_ = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best_epoch_;
  std::filesystem::path last_good_;
};

/// Validation Chamfer of a model over a set (no regulariser, gradient-free).
double mean_chamfer(const model::Model& model, const std::vector<csi::Example>& set);

}  // namespace c2pc::train
