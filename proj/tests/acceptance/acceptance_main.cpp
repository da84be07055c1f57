// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance <path to c2pc binary> <path to configs/tiny.toml> [work dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/diffmath/grad_check.hpp"
#include "c2pc/eval/eval.hpp"
#include "c2pc/kernels/parallel.hpp"
#include "c2pc/log.hpp"
#include "c2pc/loss/loss.hpp"
#include "c2pc/synth/synth.hpp"
#include "c2pc/train/trainer.hpp"
#include "generators.hpp"

namespace {

using namespace c2pc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---- 1. full-size forward ----
Outcome full_forward() {
  std::mt19937_64 rng(1);
  const model::Model m(model::ModelConfig{}, 1);
  std::vector<csi::ModelInput> batch{testing::random_input(m.config(), rng), testing::random_input(m.config(), rng)};
  dm::NoGradGuard no_grad;
  const auto start = Clock::now();
  const auto out = m.forward(batch);
  const double secs = seconds_since(start);
  bool finite = true, shapes = out.size() == 2;
  for (const auto& t : out) {
    shapes = shapes && t.shape() == dm::Shape{1200, 3};
    for (double x : t.to_vector()) finite = finite && std::isfinite(x);
  }
  return {shapes && finite && secs < 5.0,
          fmt("output [%zu,%zu,%zu], finite=%d, %.2f s (limit 5 s, %d threads)", out.size(), out[0].dim(0),
              out[0].dim(1), int(finite), secs, kernels::max_threads())};
}

// ---- 2. gradient suite ----
Outcome gradient_suite() {
  const auto start = Clock::now();
  const model::Model m(model::ModelConfig::tiny(), 11);
  std::mt19937_64 rng(11);
  testing::randomise_parameters(m, rng);
  const auto in = testing::random_input(m.config(), rng);
  const auto gt = cloud_to_tensor(testing::random_cloud(rng, m.config().points, 0.5));
  const auto report = dm::grad_check(
      [&] { return loss::total_loss(m.forward(in), gt, m.transform(), {0.001}); }, m.params().tensors(), 1e-5, 1e-4);
  const double secs = seconds_since(start);
  std::string worst;
  double worst_err = 0.0;
  for (const auto& p : report.params)
    if (p.max_rel_error >= worst_err) {
      worst_err = p.max_rel_error;
      worst = p.name;
    }
  return {report.passed && report.max_rel_error < 1e-4 && secs < 60.0,
          fmt("%zu tensors, max relative error %.2e (%s), %.1f s (limits 1e-4, 60 s)", report.params.size(),
              report.max_rel_error, worst.c_str(), secs)};
}

// ---- 3. Chamfer ----
Outcome chamfer_checks() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto p = testing::random_cloud(rng, 1 + rng() % 64);
    const auto q = testing::random_cloud(rng, 1 + rng() % 64);
    worst = std::max(worst, std::abs(loss::chamfer(p, q) - loss::chamfer_brute_force(p, q)));
  }
  double self = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto p = testing::random_cloud(rng, 1 + rng() % 2000);
    self = std::max(self, std::abs(loss::chamfer(p, p)));
  }
  const double h1 = loss::chamfer(PointCloud{{{0, 0, 0}}}, PointCloud{{{1, 0, 0}}});
  const double h2 = loss::chamfer(PointCloud{{{0, 0, 0}, {2, 0, 0}}}, PointCloud{{{1, 0, 0}}});
  return {worst <= 1e-12 && self == 0.0 && h1 == 2.0 && h2 == 2.0,
          fmt("oracle max |diff| %.1e over 200 pairs, chamfer(P,P)=%g, hand examples %g and %g", worst, self, h1, h2)};
}

// ---- 4. regulariser ----
double reg(std::size_t k, std::vector<double> v) { return loss::feature_transform_reg(dm::Tensor::from({k, k}, std::move(v))).item(); }

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t k) {
  std::vector<double> c(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < k; ++j) c[i * k + j] += a[i * k + l] * b[l * k + j];
  return c;
}

// Orthogonal matrix from Gram-Schmidt on a random Gaussian matrix.
std::vector<double> random_orthogonal(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> g;
  std::vector<double> q(k * k);
  for (auto& x : q) x = g(rng);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t p = 0; p < r; ++p) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += q[r * k + j] * q[p * k + j];
      for (std::size_t j = 0; j < k; ++j) q[r * k + j] -= dot * q[p * k + j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < k; ++j) norm += q[r * k + j] * q[r * k + j];
    for (std::size_t j = 0; j < k; ++j) q[r * k + j] /= std::sqrt(norm);
  }
  return q;
}

Outcome regulariser_checks() {
  std::mt19937_64 rng(4);
  double identity = 0.0, rotation = 0.0, invariance = 0.0;
  for (std::size_t k : {1u, 3u, 8u, 64u}) {
    std::vector<double> eye(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
    identity = std::max(identity, std::abs(reg(k, eye)));
  }
  for (int i = 0; i < 100; ++i) {
    const auto r = testing::axis_angle(rng, std::uniform_real_distribution<double>(0, std::numbers::pi)(rng));
    std::vector<double> v;
    for (const auto& row : r) v.insert(v.end(), row.begin(), row.end());
    rotation = std::max(rotation, reg(3, v));
  }
  const double twice = reg(3, {2, 0, 0, 0, 2, 0, 0, 0, 2});
  std::normal_distribution<double> g;
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 1 + rng() % 16;
    std::vector<double> t(k * k);
    for (auto& x : t) x = g(rng);
    const double base = reg(k, t);
    invariance = std::max(invariance, std::abs(reg(k, matmul(t, random_orthogonal(rng, k), k)) - base));
  }
  return {identity == 0.0 && rotation <= 1e-12 && std::abs(twice - 3.0) <= 1e-12 && invariance <= 1e-10,
          fmt("identity %g, rotations max %.1e, 2I=%.15g, orthogonal invariance max %.1e over 100 cases", identity,
              rotation, twice, invariance)};
}

// ---- 5. ICP ----
Outcome icp_trials() {
  std::mt19937_64 rng(5);
  int recovered = 0, monotone = 0;
  double worst_rmse = 0.0, min_fitness = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto source = testing::random_cloud(rng, 500);
    const double angle = std::uniform_real_distribution<double>(0.0, 15.0)(rng) * std::numbers::pi / 180.0;
    const auto target = testing::rigid_transform(source, testing::axis_angle(rng, angle),
                                                 testing::random_translation(rng, 0.2));
    eval::IcpOptions o;
    o.threshold = 0.5;
    const auto r = eval::icp_register(source, target, o);
    worst_rmse = std::max(worst_rmse, r.inlier_rmse);
    min_fitness = std::min(min_fitness, r.fitness);
    recovered += r.inlier_rmse < 1e-6 && r.fitness == 1.0;
    bool mono = true;
    for (std::size_t k = 1; k < r.mse_history.size(); ++k) mono = mono && r.mse_history[k] <= r.mse_history[k - 1];
    monotone += mono;
  }
  return {recovered == 100 && monotone == 100,
          fmt("%d/100 recovered (worst rmse %.1e, min fitness %g), %d/100 monotone MSE histories", recovered,
              worst_rmse, min_fitness, monotone)};
}

// ---- 6. end to end through the command-line tool ----
int run_command(const std::string& cmd, const fs::path& log) {
  return std::system((cmd + " > \"" + log.string() + "\" 2>&1").c_str());
}

std::vector<nlohmann::json> read_metrics(const fs::path& file) {
  std::ifstream in(file);
  std::vector<nlohmann::json> rows;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

Outcome end_to_end(const std::string& cli, const std::string& tiny_config, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string q = "\"";
  const auto start = Clock::now();
  if (run_command(q + cli + q + " synth --n 64 --out " + q + (work / "data").string() + q, work / "synth.log") != 0) {
    return {false, "synth failed, see " + (work / "synth.log").string()};
  }
  auto train = [&](const char* run) {
    return run_command(q + cli + q + " --config " + q + tiny_config + q + " train --data " + q +
                           (work / "data").string() + q + " --out " + q + (work / run).string() + q,
                       work / (std::string(run) + ".log"));
  };
  if (train("run1") != 0) return {false, "training failed, see " + (work / "run1.log").string()};
  const double secs = seconds_since(start);
  if (train("run2") != 0) return {false, "second training run failed"};

  auto a = read_metrics(work / "run1" / "metrics.jsonl");
  auto b = read_metrics(work / "run2" / "metrics.jsonl");
  if (a.size() != 30) return {false, fmt("expected 30 epochs, metrics log has %zu", a.size())};
  const double first = a.front()["val_chamfer"], last = a.back()["val_chamfer"];
  // Wall-clock time is the only field allowed to differ between runs.
  for (auto* rows : {&a, &b})
    for (auto& r : *rows) r.erase("wall_ms");
  const bool identical = a == b;
  return {last < 0.5 * first && secs < 600.0 && identical,
          fmt("val chamfer %.4f -> %.4f (ratio %.3f, limit 0.5), %.1f s (limit 600 s), rerun bit-identical=%d", first,
              last, last / first, secs, int(identical))};
}

// ---- 7. schedule, optimiser, resume ----
Outcome schedule_and_optimizer(const fs::path& work) {
  const train::TrainConfig defaults;
  const bool schedule = train::lr_at(0, defaults) == 1e-4 && train::lr_at(10, defaults) == 5e-5 &&
                        train::lr_at(25, defaults) == 2.5e-5;

  std::vector<double> w{1.0}, g{1.0};
  const std::size_t sizes[] = {1};
  auto state = train::NAdamState::fresh(sizes);
  const std::span<double> ws[] = {w};
  const std::span<const double> gs[] = {g};
  train::nadam_step(ws, gs, state, 0.1, train::NAdamConfig{});
  const double golden = 0.894354823220913;  // f = w^2/2 from w = 1, lr 0.1
  const bool step = std::abs(w[0] - golden) <= 1e-12;

  synth::DatasetConfig dc;
  dc.n = 12;
  dc.seed = 21;
  dc.slices = 5;
  dc.scene.antennas = 2;
  dc.rf.subcarriers = 4;
  const auto data = work / "resume_data";
  fs::remove_all(data);
  synth::make_dataset(dc, data);
  const auto points = model::ModelConfig::tiny().points;
  const auto tr = csi::load_split(data, "train", points);
  const auto va = csi::load_split(data, "val", points);
  train::TrainConfig c;
  c.lr0 = 1e-2;
  c.batch_size = 4;
  c.seed = 5;
  c.epochs = 2;
  train::Trainer straight(model::ModelConfig::tiny(), c, {});
  const auto h2 = straight.fit(tr, va);
  c.epochs = 1;
  const auto dir = work / "resume_run";
  fs::remove_all(dir);
  train::Trainer first(model::ModelConfig::tiny(), c, dir);
  first.fit(tr, va);
  c.epochs = 2;
  auto resumed = train::Trainer::resume(dir / "last.ckpt", c, dir);
  const auto h1 = resumed.fit(tr, va);
  bool same = resumed.optimizer() == straight.optimizer() && h1.size() == 1 &&
              h1[0].val_chamfer == h2[1].val_chamfer && h1[0].train_loss == h2[1].train_loss;
  for (const auto& [name, t] : straight.model().params().tensors()) {
    same = same && t.to_vector() == resumed.model().params()[name].to_vector();
  }
  return {schedule && step && same,
          fmt("lr_at{0,10,25}={%g,%g,%g}, NAdam step %.15f (golden %.15f), resume bit-exact=%d", train::lr_at(0, defaults),
              train::lr_at(10, defaults), train::lr_at(25, defaults), w[0], golden, int(same))};
}

// ---- 8. latency ----
Outcome latency() {
  std::mt19937_64 rng(8);
  const model::Model m(model::ModelConfig{}, 8);
  const auto s = eval::bench_latency(m, testing::random_input(m.config(), rng), 1, 5);
  return {s.runs == 5 && s.p50_ms <= s.p95_ms && s.min_ms <= s.mean_ms && s.mean_ms <= s.max_ms,
          fmt("full config, single sample, %zu runs: mean %.1f ms, p50 %.1f ms, p95 %.1f ms (reported only)", s.runs,
              s.mean_ms, s.p50_ms, s.p95_ms)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <c2pc binary> <tiny config> [work dir]\n";
    return 2;
  }
  const std::string cli = argv[1], tiny = argv[2];
  const fs::path work = argc > 3 ? fs::path(argv[3]) : fs::temp_directory_path() / "c2pc_acceptance";
  kernels::configure_threads_from_env();
  set_log_sink(nullptr);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"full-config forward, batch 2", full_forward},
      {"gradient suite, tiny config", gradient_suite},
      {"chamfer oracle, identity and hand examples", chamfer_checks},
      {"feature-transform regulariser", regulariser_checks},
      {"ICP recovery and monotone MSE", icp_trials},
      {"end-to-end synth + train, reproducible", [&] { return end_to_end(cli, tiny, work / "e2e"); }},
      {"schedule, NAdam golden step, resume equivalence", [&] { return schedule_and_optimizer(work); }},
      {"latency benchmark", latency},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
