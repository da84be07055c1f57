#include "c2pc/eval/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "c2pc/diffmath/tensor.hpp"
#include "c2pc/errors.hpp"

namespace c2pc::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Point3> transformed(const std::vector<Point3>& points, const RegistrationResult& r) {
  std::vector<Point3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = r.apply(points[i]);
  return out;
}

struct Matching {
  double objective = 0.0;  // mean of min(d^2, tau^2)
  std::vector<std::size_t> inlier;  // source indices
  double inlier_sq_sum = 0.0;
};

Matching match(const kernels::KdTree& tree, const std::vector<Point3>& moved, double tau_sq,
               kernels::NeighborResult& nn) {
  nn = tree.query(moved);
  Matching m;
  double truncated = 0.0;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    const double d = nn.sq_distance[i];
    if (d <= tau_sq) {
      m.inlier.push_back(i);
      m.inlier_sq_sum += d;
      truncated += d;
    } else {
      truncated += tau_sq;
    }
  }
  m.objective = truncated / static_cast<double>(moved.size());
  return m;
}

void record(RegistrationResult& r, const Matching& m, std::size_t n) {
  r.inliers = m.inlier.size();
  r.fitness = static_cast<double>(m.inlier.size()) / static_cast<double>(n);
  r.inlier_rmse = m.inlier.empty() ? kNaN : std::sqrt(m.inlier_sq_sum / static_cast<double>(m.inlier.size()));
}

double sorted_mean(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

kernels::NeighborResult nearest_neighbors(const PointCloud& query, const PointCloud& target) {
  if (target.points.empty()) throw DataError("nearest_neighbors: empty target cloud");
  return kernels::KdTree(target.points).query(query.points);
}

Point3 RegistrationResult::apply(const Point3& p) const {
  Point3 out;
  for (int r = 0; r < 3; ++r) {
    out[r] = rotation[r][0] * p[0] + rotation[r][1] * p[1] + rotation[r][2] * p[2] + translation[r];
  }
  return out;
}

std::pair<Matrix3, Point3> rigid_fit(const std::vector<Point3>& p, const std::vector<Point3>& q) {
  if (p.size() != q.size()) throw ShapeError("rigid_fit: point count mismatch");
  if (p.size() < 3) throw ShapeError("rigid_fit: at least three pairs are required");
  const double n = static_cast<double>(p.size());
  Eigen::Vector3d pc = Eigen::Vector3d::Zero(), qc = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) {
    pc += Eigen::Vector3d(p[i][0], p[i][1], p[i][2]);
    qc += Eigen::Vector3d(q[i][0], q[i][1], q[i][2]);
  }
  pc /= n;
  qc /= n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) {
    h += (Eigen::Vector3d(p[i][0], p[i][1], p[i][2]) - pc) * (Eigen::Vector3d(q[i][0], q[i][1], q[i][2]) - qc).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  // Reflection: flip the axis of the smallest singular value.
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d rot = svd.matrixV() * d * svd.matrixU().transpose();
  const Eigen::Vector3d t = qc - rot * pc;
  Matrix3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = rot(i, j);
  return {r, {t(0), t(1), t(2)}};
}

RegistrationResult icp_register(const PointCloud& source, const PointCloud& target, const IcpOptions& options) {
  if (source.points.empty()) throw DataError("icp_register: empty source cloud");
  if (target.points.empty()) throw DataError("icp_register: empty target cloud");
  if (!(options.threshold > 0.0)) throw ConfigError("icp_register: threshold must be positive");
  if (!(options.tolerance >= 0.0)) throw ConfigError("icp_register: tolerance must be non-negative");

  const kernels::KdTree tree(target.points);
  const double tau_sq = options.threshold * options.threshold;
  const std::size_t n = source.points.size();

  RegistrationResult result;
  if (options.centroid_prealign) {
    Point3 cs{0, 0, 0}, ct{0, 0, 0};
    for (const auto& p : source.points)
      for (int k = 0; k < 3; ++k) cs[k] += p[k];
    for (const auto& p : target.points)
      for (int k = 0; k < 3; ++k) ct[k] += p[k];
    for (int k = 0; k < 3; ++k) {
      result.translation[k] = ct[k] / static_cast<double>(target.size()) - cs[k] / static_cast<double>(n);
    }
  }

  kernels::NeighborResult nn;
  Matching current = match(tree, transformed(source.points, result), tau_sq, nn);
  record(result, current, n);
  result.mse_history.push_back(current.objective);

  std::vector<Point3> p, q;
  while (result.iterations < options.max_iter) {
    if (current.inlier.size() < 3) {
      throw DegenerateRegistration("icp_register: " + std::to_string(current.inlier.size()) +
                                       " correspondences within the threshold, at least 3 are required",
                                   result);
    }
    p.clear();
    q.clear();
    for (std::size_t i : current.inlier) {
      p.push_back(source.points[i]);
      q.push_back(target.points[nn.index[i]]);
    }
    RegistrationResult candidate = result;
    std::tie(candidate.rotation, candidate.translation) = rigid_fit(p, q);
    kernels::NeighborResult candidate_nn;
    Matching next = match(tree, transformed(source.points, candidate), tau_sq, candidate_nn);
    // The fit can only lower the objective; rounding may not, and then the old transform stands.
    if (!(next.objective <= current.objective)) break;
    const double improvement = current.objective - next.objective;
    candidate.iterations = result.iterations + 1;
    candidate.mse_history.push_back(next.objective);
    record(candidate, next, n);
    result = std::move(candidate);
    current = std::move(next);
    nn = std::move(candidate_nn);
    if (improvement < options.tolerance) break;
  }
  if (current.inlier.size() < 3) {
    throw DegenerateRegistration("icp_register: fewer than 3 correspondences within the threshold", result);
  }
  return result;
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw ConfigError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw ConfigError("percentile must lie in (0, 100]");
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(samples.size())));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

LatencyStats latency_stats(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ConfigError("latency statistics need at least one run");
  LatencyStats s;
  s.runs = samples_ms.size();
  double sum = 0.0;
  for (double x : samples_ms) sum += x;
  s.mean_ms = sum / static_cast<double>(s.runs);
  s.p50_ms = percentile(samples_ms, 50.0);
  s.p95_ms = percentile(samples_ms, 95.0);
  s.min_ms = *std::min_element(samples_ms.begin(), samples_ms.end());
  s.max_ms = *std::max_element(samples_ms.begin(), samples_ms.end());
  s.samples_ms = std::move(samples_ms);
  return s;
}

LatencyStats bench_latency(const model::Model& model, const csi::ModelInput& input, std::size_t warmup,
                           std::size_t runs) {
  if (runs == 0) throw ConfigError("bench_latency: runs must be at least 1");
  model.check_input(input);
  dm::NoGradGuard no_grad;
  for (std::size_t i = 0; i < warmup; ++i) (void)model.forward(input);
  std::vector<double> times;
  times.reserve(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const dm::Tensor out = model.forward(input);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return latency_stats(std::move(times));
}

MetricsReport evaluate(const Predictor& predict, const std::vector<csi::Example>& examples,
                       const IcpOptions& options) {
  if (examples.empty()) throw ConfigError("evaluate: empty dataset");
  std::vector<PointCloud> predictions;
  predictions.reserve(examples.size());
  for (const auto& ex : examples) predictions.push_back(predict(ex));

  MetricsReport report;
  report.threshold = options.threshold;
  report.samples.resize(examples.size());
  std::vector<std::exception_ptr> errors(examples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < examples.size(); ++i) {
    SampleMetrics& m = report.samples[i];
    m.id = examples[i].id;
    try {
      const auto r = icp_register(predictions[i], examples[i].cloud, options);
      m.fitness = r.fitness;
      m.rmse = r.inlier_rmse;
      m.iterations = r.iterations;
    } catch (const DegenerateRegistration& e) {
      m.degenerate = true;
      m.fitness = 0.0;
      m.rmse = kNaN;
      m.iterations = e.partial().iterations;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> fitness, rmse;
  for (const auto& m : report.samples) {
    fitness.push_back(m.fitness);
    if (m.degenerate) {
      ++report.degenerate;
    } else {
      rmse.push_back(m.rmse);
    }
  }
  report.mean_fitness = sorted_mean(std::move(fitness));
  report.mean_rmse = sorted_mean(std::move(rmse));
  return report;
}

MetricsReport evaluate(const model::Model& model, const std::vector<csi::Example>& examples,
                       const IcpOptions& options) {
  for (const auto& ex : examples) model.check_input(ex.input);
  return evaluate([&model](const csi::Example& ex) { return model.infer(ex.input); }, examples, options);
}

namespace {
nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }
}  // namespace

nlohmann::json to_json(const LatencyStats& s) {
  return {{"runs", s.runs},       {"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms},
          {"min_ms", s.min_ms},   {"max_ms", s.max_ms},   {"samples_ms", s.samples_ms}};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& m : r.samples) {
    samples.push_back({{"id", m.id},
                       {"fitness", m.fitness},
                       {"rmse", number_or_null(m.rmse)},
                       {"iterations", m.iterations},
                       {"degenerate", m.degenerate}});
  }
  nlohmann::json j = {{"threshold", r.threshold},
                      {"count", r.samples.size()},
                      {"mean_fitness", number_or_null(r.mean_fitness)},
                      {"mean_rmse", number_or_null(r.mean_rmse)},
                      {"degenerate", r.degenerate},
                      {"samples", std::move(samples)}};
  if (r.latency) j["latency"] = to_json(*r.latency);
  return j;
}

std::string to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "id,fitness,rmse,iterations,degenerate\n";
  for (const auto& m : r.samples) {
    out << m.id << ',' << m.fitness << ',';
    if (std::isfinite(m.rmse)) out << m.rmse;
    out << ',' << m.iterations << ',' << (m.degenerate ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace c2pc::eval
