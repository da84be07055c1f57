#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/csidata/dataset.hpp"
#include "c2pc/kernels/nearest.hpp"
#include "c2pc/model/model.hpp"

namespace c2pc::eval {

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Exact nearest neighbour of every query point in `target` (KD-tree, ties to the lowest
/// index). DataError on an empty target.
kernels::NeighborResult nearest_neighbors(const PointCloud& query, const PointCloud& target);

/// Rigid transform x -> R x + t taking the source cloud onto the target.
struct RegistrationResult {
  Matrix3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Point3 translation{0, 0, 0};
  double fitness = 0.0;      // inliers / |source|
  double inlier_rmse = 0.0;  // metres, over the inliers
  std::size_t inliers = 0;
  std::size_t iterations = 0;  // rigid fits accepted
  // Objective before the first fit and after every accepted one: mean over all source points
  // of min(d^2, threshold^2), d the distance to the nearest target point. Non-increasing.
  std::vector<double> mse_history;

  Point3 apply(const Point3& p) const;
};

struct IcpOptions {
  double threshold = 0.05;  // inlier distance, metres
  std::size_t max_iter = 50;
  double tolerance = 1e-8;  // stop once the objective improves by less than this
  bool centroid_prealign = false;  // start from the translation matching the two centroids
};

/// Thrown when fewer than three source points have a correspondence within the threshold;
/// `partial()` holds the transform and statistics reached so far.
class DegenerateRegistration : public std::runtime_error {
 public:
  DegenerateRegistration(const std::string& what, RegistrationResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RegistrationResult& partial() const noexcept { return partial_; }

 private:
  RegistrationResult partial_;
};

/// Point-to-point ICP. Each iteration matches the transformed source against the target,
/// solves the orthogonal Procrustes problem on the inliers (Kabsch, reflection corrected)
/// and keeps the new transform only if the objective does not increase.
RegistrationResult icp_register(const PointCloud& source, const PointCloud& target, const IcpOptions& options = {});

/// Kabsch fit minimising sum |R p_i + t - q_i|^2. Requires at least three pairs.
std::pair<Matrix3, Point3> rigid_fit(const std::vector<Point3>& p, const std::vector<Point3>& q);

struct LatencyStats {
  std::size_t runs = 0;
  double mean_ms = 0.0, p50_ms = 0.0, p95_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
  std::vector<double> samples_ms;
};

/// Nearest-rank percentile of unsorted samples, p in (0, 100].
double percentile(std::vector<double> samples, double p);
LatencyStats latency_stats(std::vector<double> samples_ms);

/// Wall clock of gradient-free single-sample forwards. ConfigError if runs == 0.
LatencyStats bench_latency(const model::Model& model, const csi::ModelInput& input, std::size_t warmup,
                           std::size_t runs);

struct SampleMetrics {
  std::string id;
  double fitness = 0.0;
  double rmse = 0.0;  // NaN when degenerate
  std::size_t iterations = 0;
  bool degenerate = false;
};

struct MetricsReport {
  double threshold = 0.0;
  std::vector<SampleMetrics> samples;
  double mean_fitness = 0.0;  // over every sample, degenerate ones counting 0
  double mean_rmse = 0.0;     // over registered samples; NaN if none
  std::size_t degenerate = 0;
  std::optional<LatencyStats> latency;
};

using Predictor = std::function<PointCloud(const csi::Example&)>;

/// Registers each prediction against its ground truth. Predictions run in order; the
/// registrations run in parallel. Means are summed over sorted values, so they do not
/// depend on dataset order. ConfigError on an empty set.
MetricsReport evaluate(const Predictor& predict, const std::vector<csi::Example>& examples,
                       const IcpOptions& options = {});
MetricsReport evaluate(const model::Model& model, const std::vector<csi::Example>& examples,
                       const IcpOptions& options = {});

nlohmann::json to_json(const LatencyStats& s);
nlohmann::json to_json(const MetricsReport& r);
/// id,fitness,rmse,iterations,degenerate
std::string to_csv(const MetricsReport& r);

}  // namespace c2pc::eval
