#include "c2pc/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "c2pc/csidata/container.hpp"
#include "c2pc/csidata/ply.hpp"
#include "c2pc/csidata/preprocess.hpp"
#include "c2pc/errors.hpp"
#include "c2pc/kernels/parallel.hpp"
#include "c2pc/log.hpp"
#include "c2pc/model/checkpoint.hpp"
#include "c2pc/synth/synth.hpp"
#include "c2pc/train/trainer.hpp"

namespace c2pc::cli {
namespace {

namespace fs = std::filesystem;

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw ConfigError(std::string(command) + " needs --" + flag);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

/// Standard-normal features in the canonical antenna-major pair order.
csi::ModelInput random_input(const model::ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(c.pairs() * 2 * c.slices);
  for (auto& x : v) x = g(rng);
  csi::ModelInput in;
  in.features = dm::Tensor::from({c.pairs(), 2, c.slices}, std::move(v));
  for (std::size_t a = 0; a < c.antennas; ++a)
    for (std::size_t s = 0; s < c.subcarriers; ++s) {
      in.antenna_index.push_back(a);
      in.subcarrier_index.push_back(s);
    }
  return in;
}

void add_options(CLI::App& app, RunConfig& c) {
  auto& m = c.model;
  app.add_option("--antennas", m.antennas, "A, receive antennas")->group("Model");
  app.add_option("--subcarriers", m.subcarriers, "S, subcarriers per antenna")->group("Model");
  app.add_option("--slices", m.slices, "T, time slices per sample")->group("Model");
  app.add_option("--embed_dim", m.embed_dim, "E, token width and feature-transform size")->group("Model");
  app.add_option("--heads", m.heads, "attention heads")->group("Model");
  app.add_option("--encoder_layers", m.encoder_layers)->group("Model");
  app.add_option("--decoder_layers", m.decoder_layers)->group("Model");
  app.add_option("--points", m.points, "N, points per predicted cloud")->group("Model");
  app.add_option("--ffn_dim", m.ffn_dim, "feed-forward width, 0 for 4E")->group("Model");
  app.add_option("--kernel_size", m.kernel_size, "temporal convolution width, 0 for T")->group("Model");
  app.add_option("--dropout", m.dropout)->group("Model");

  auto& t = c.train;
  app.add_option("--seed", t.seed, "root seed for data, initialisation, shuffling and dropout")->group("Training");
  app.add_option("--lr0", t.lr0, "initial learning rate")->group("Training");
  app.add_option("--epochs", t.epochs)->group("Training");
  app.add_option("--step_size", t.step_size, "epochs between learning-rate decays")->group("Training");
  app.add_option("--gamma", t.gamma, "learning-rate decay factor")->group("Training");
  app.add_option("--batch_size", t.batch_size)->group("Training");
  app.add_option("--lambda", t.lambda, "feature-transform regulariser weight")->group("Training");
  app.add_option("--grad_clip", t.grad_clip, "global gradient-norm cap, 0 disables")->group("Training");
  app.add_option("--beta1", t.nadam.beta1)->group("Training");
  app.add_option("--beta2", t.nadam.beta2)->group("Training");
  app.add_option("--eps", t.nadam.eps)->group("Training");
  app.add_option("--momentum_decay", t.nadam.momentum_decay)->group("Training");

  app.add_option("--threshold", c.icp.threshold, "ICP inlier distance in metres")->group("Evaluation");
  app.add_option("--max_iter", c.icp.max_iter, "ICP iteration budget")->group("Evaluation");
  app.add_option("--tolerance", c.icp.tolerance, "ICP stop on objective improvement below this")->group("Evaluation");
  app.add_flag("--centroid_prealign,!--no-centroid_prealign", c.icp.centroid_prealign,
               "start ICP from centroid alignment")
      ->group("Evaluation");
  app.add_option("--split", c.split, "manifest split to evaluate, empty for all")->group("Evaluation");
  app.add_flag("--predict-ground-truth", c.predict_ground_truth, "debug oracle: predictions are the ground truth")
      ->group("Evaluation");

  app.add_option("--n", c.n, "synthetic samples")->group("Synthesis");
  app.add_option("--ply_points", c.ply_points, "points per stored ground-truth cloud")->group("Synthesis");
  app.add_option("--val_fraction", c.val_fraction, "trailing fraction of samples marked val")->group("Synthesis");
  app.add_option("--noise_std", c.noise_std, "complex Gaussian CSI noise per component")->group("Synthesis");

  app.add_option("--warmup", c.warmup, "untimed forwards before measuring")->group("Benchmark");
  app.add_option("--runs", c.runs, "timed forwards")->group("Benchmark");
  app.add_flag("--random-init", c.random_init, "benchmark a freshly initialised model")->group("Benchmark");

  app.add_option("--data", c.data, "dataset directory holding manifest.json")->group("Paths");
  app.add_option("--out", c.out, "output file or directory")->group("Paths");
  app.add_option("--checkpoint", c.checkpoint, "model checkpoint")->group("Paths");
  app.add_option("--input", c.input, "CSI container")->group("Paths");
  app.add_option("--resume", c.resume, "continue training from this checkpoint")->group("Paths");
}

void cmd_synth(const RunConfig& c, std::ostream& out) {
  require(c.out, "out", "synth");
  synth::DatasetConfig d;
  d.n = c.n;
  d.seed = c.train.seed;
  d.slices = c.model.slices;
  d.points = c.ply_points;
  d.val_fraction = c.val_fraction;
  d.scene.antennas = c.model.antennas;
  d.rf.subcarriers = c.model.subcarriers;
  d.rf.noise_std = c.noise_std;
  const auto manifest = synth::make_dataset(d, c.out);
  out << "wrote " << manifest.entries.size() << " samples to " << c.out << '\n';
}

void cmd_init(const RunConfig& c, std::ostream& out) {
  require(c.out, "out", "init");
  const model::Model m(c.model, c.train.seed);
  model::save_model(c.out, m);
  out << "wrote " << m.params().parameter_count() << " parameters to " << c.out << '\n';
}

void cmd_train(const RunConfig& c, const std::string& config_text, std::ostream& out) {
  require(c.data, "data", "train");
  require(c.out, "out", "train");
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.toml", config_text);
  auto trainer = c.resume.empty() ? train::Trainer(c.model, c.train, c.out)
                                  : train::Trainer::resume(c.resume, c.train, c.out);
  const std::size_t points = trainer.model().config().points;
  const auto train_set = csi::load_split(c.data, "train", points);
  const auto val_set = csi::load_split(c.data, "val", points);
  const auto history = trainer.fit(train_set, val_set);
  for (const auto& m : history) out << train::to_json(m).dump() << '\n';
  if (trainer.best_epoch()) {
    out << "best val chamfer " << trainer.best_val_chamfer() << " at epoch " << *trainer.best_epoch() << '\n';
  }
}

void cmd_infer(const RunConfig& c, std::ostream& out) {
  require(c.checkpoint, "checkpoint", "infer");
  require(c.input, "input", "infer");
  require(c.out, "out", "infer");
  const model::Model m = model::load_model(c.checkpoint);
  const auto input = csi::preprocess(csi::load_csi_container(c.input));
  const PointCloud cloud = m.infer(input);
  csi::write_ply(cloud, fs::path(c.out));
  out << "wrote " << cloud.size() << " points to " << c.out << '\n';
}

// Predictions are registered against the ground truth at its stored resolution
// (ply_points), not the model's N.
void cmd_eval(const RunConfig& c, std::ostream& out) {
  require(c.data, "data", "eval");
  eval::MetricsReport report;
  if (c.predict_ground_truth) {
    const auto set = csi::load_split(c.data, c.split, c.ply_points);
    report = eval::evaluate([](const csi::Example& ex) { return ex.cloud; }, set, c.icp);
  } else {
    require(c.checkpoint, "checkpoint", "eval");
    const model::Model m = model::load_model(c.checkpoint);
    const auto set = csi::load_split(c.data, c.split, c.ply_points);
    report = eval::evaluate(m, set, c.icp);
  }
  nlohmann::json j = eval::to_json(report);
  j["seed"] = c.train.seed;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "metrics.json", j.dump(2) + "\n");
    write_text(fs::path(c.out) / "metrics.csv", eval::to_csv(report));
  }
  j.erase("samples");
  out << j.dump(2) << '\n';
}

void cmd_bench(const RunConfig& c, std::ostream& out) {
  if (c.random_init == !c.checkpoint.empty()) throw ConfigError("bench needs exactly one of --checkpoint and --random-init");
  const model::Model m = c.random_init ? model::Model(c.model, c.train.seed) : model::load_model(c.checkpoint);
  const csi::ModelInput input = c.input.empty() ? random_input(m.config(), c.train.seed)
                                                : csi::preprocess(csi::load_csi_container(c.input));
  const auto stats = eval::bench_latency(m, input, c.warmup, c.runs);
  nlohmann::json j = eval::to_json(stats);
  j["seed"] = c.train.seed;
  j["threads"] = kernels::max_threads();
  j["model"] = model::to_json(m.config());
  if (!c.out.empty()) write_text(c.out, j.dump(2) + "\n");
  j.erase("samples_ms");
  out << j.dump(2) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"CSI to point cloud: synthesis, training, inference, evaluation and benchmarking", "c2pc"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML key = value file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  bool show_config = false;
  app.add_flag("--show-config", show_config, "print the effective configuration and exit");

  RunConfig config;
  add_options(app, config);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset (--n, --seed, --out)");
  auto* init_cmd = app.add_subcommand("init", "write a randomly initialised checkpoint (--out)");
  auto* train_cmd = app.add_subcommand("train", "train a model (--data, --out, optional --resume)");
  auto* infer_cmd = app.add_subcommand("infer", "predict one cloud (--checkpoint, --input, --out)");
  auto* eval_cmd = app.add_subcommand("eval", "ICP fitness and RMSE over a split (--checkpoint, --data, --threshold)");
  auto* bench_cmd = app.add_subcommand("bench", "forward-pass latency (--checkpoint or --random-init)");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  // The effective configuration minus the meta options, so it can be fed back with --config.
  const auto config_text = [&] {
    std::string text = app.config_to_str(true, true);
    std::vector<std::string> kept;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      if (line.rfind("show-config", 0) == 0 || line.rfind("config", 0) == 0) {
        if (!kept.empty() && kept.back().rfind("# ", 0) == 0) kept.pop_back();  // its description
        continue;
      }
      kept.push_back(line);
    }
    std::string joined;
    for (const auto& line : kept) joined += line + '\n';
    return joined;
  }();

  if (show_config) {
    out << config_text;
    return kExitOk;
  }

  try {
    kernels::configure_threads_from_env();
    config.model.validate();
    config.train.validate();
    if (synth_cmd->parsed()) cmd_synth(config, out);
    if (init_cmd->parsed()) cmd_init(config, out);
    if (train_cmd->parsed()) cmd_train(config, config_text, out);
    if (infer_cmd->parsed()) cmd_infer(config, out);
    if (eval_cmd->parsed()) cmd_eval(config, out);
    if (bench_cmd->parsed()) cmd_bench(config, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data does not fit the model: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace c2pc::cli
