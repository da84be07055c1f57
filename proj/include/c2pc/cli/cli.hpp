#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "c2pc/eval/eval.hpp"
#include "c2pc/model/model.hpp"
#include "c2pc/train/optim.hpp"

namespace c2pc::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitInternal = 4;

/// Everything a command can be configured with. Every field is a flat key in the config
/// file and a `--key` flag; flags override the file.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;  // `seed` is the root seed for every command
  eval::IcpOptions icp;

  // synth
  std::size_t n = 64;
  std::size_t ply_points = 1200;
  double val_fraction = 0.25;
  double noise_std = 1e-4;

  // bench
  std::size_t warmup = 3;
  std::size_t runs = 20;
  bool random_init = false;

  // eval
  bool predict_ground_truth = false;
  std::string split = "val";  // empty string: every entry

  // paths
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string input;
  std::string resume;
};

/// Parses and runs one command line (argv[0] is the program name). Normal output goes to
/// `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace c2pc::cli
