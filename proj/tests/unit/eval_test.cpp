#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "c2pc/errors.hpp"
#include "c2pc/eval/eval.hpp"
#include "c2pc/synth/synth.hpp"
#include "generators.hpp"

namespace c2pc::eval {
namespace {

using testing::axis_angle;
using testing::random_cloud;
using testing::random_translation;
using testing::rigid_transform;

double orthonormality_error(const Matrix3& r) {
  double e = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[i][k] * r[j][k];
      e = std::max(e, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  return e;
}

double det(const Matrix3& r) {
  return r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
         r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
}

TEST(NearestNeighbors, SelfQueryAndSinglePoint) {
  std::mt19937_64 rng(1);
  const auto c = random_cloud(rng, 300);
  const auto nn = nearest_neighbors(c, c);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(nn.index[i], i);
    EXPECT_EQ(nn.sq_distance[i], 0.0);
  }
  PointCloud one;
  one.points = {{0.3, 0.2, 0.1}};
  for (auto i : nearest_neighbors(c, one).index) EXPECT_EQ(i, 0u);
  EXPECT_THROW(nearest_neighbors(c, PointCloud{}), DataError);
}

TEST(NearestNeighbors, MatchesBruteForceWithTies) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nq = 1 + rng() % 512, nt = 1 + rng() % 512;
    auto q = random_cloud(rng, nq);
    auto t = random_cloud(rng, nt);
    // Duplicate targets and grid-snapped queries force exact ties.
    if (trial % 2 == 0) {
      for (std::size_t i = 0; i < nt / 4; ++i) t.points.push_back(t.points[i]);
      for (auto& p : q.points)
        for (auto& x : p) x = std::round(x * 4.0) / 4.0;
      for (auto& p : t.points)
        for (auto& x : p) x = std::round(x * 4.0) / 4.0;
    }
    const auto kd = nearest_neighbors(q, t);
    const auto brute = kernels::nearest_brute_reference(q.points, t.points);
    ASSERT_EQ(kd.index, brute.index);
    ASSERT_EQ(kd.sq_distance, brute.sq_distance);
  }
}

TEST(RigidFit, RecoversKnownMotionAndHandlesReflection) {
  std::mt19937_64 rng(3);
  const auto p = random_cloud(rng, 50);
  const auto r = axis_angle(rng, 1.0);
  const Point3 t{0.3, -0.2, 1.0};
  const auto q = rigid_transform(p, r, t);
  const auto [rot, trans] = rigid_fit(p.points, q.points);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(trans[i], t[i], 1e-12);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(rot[i][j], r[i][j], 1e-12);
  }
  // A mirrored target has no proper rotation solution; the fit must still be a rotation.
  PointCloud mirrored = p;
  for (auto& x : mirrored.points) x[0] = -x[0];
  const auto [m, mt] = rigid_fit(p.points, mirrored.points);
  EXPECT_LT(orthonormality_error(m), 1e-12);
  EXPECT_NEAR(det(m), 1.0, 1e-12);
  EXPECT_THROW(rigid_fit({{0, 0, 0}, {1, 0, 0}}, {{0, 0, 0}, {1, 0, 0}}), ShapeError);
}

TEST(Icp, IdenticalCloudsGiveIdentity) {
  std::mt19937_64 rng(4);
  const auto c = random_cloud(rng, 200);
  const auto r = icp_register(c, c);
  EXPECT_EQ(r.fitness, 1.0);
  EXPECT_EQ(r.inlier_rmse, 0.0);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.translation[i], 0.0, 1e-15);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.rotation[i][j], i == j ? 1.0 : 0.0, 1e-15);
  }
}

TEST(Icp, RecoversTenDegreeRotationAndTranslation) {
  std::mt19937_64 rng(5);
  const auto source = random_cloud(rng, 500);
  const double a = 10.0 * std::numbers::pi / 180.0;
  const testing::Rotation rz{{{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}}};
  const auto target = rigid_transform(source, rz, {0.1, 0.05, 0.0});
  IcpOptions o;
  o.threshold = 0.5;
  const auto r = icp_register(source, target, o);
  EXPECT_LT(r.inlier_rmse, 1e-6);
  EXPECT_EQ(r.fitness, 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.rotation[i][j], rz[i][j], 1e-6);
  EXPECT_NEAR(r.translation[0], 0.1, 1e-6);
  EXPECT_NEAR(r.translation[1], 0.05, 1e-6);
}

TEST(Icp, DisjointCloudsAreDegenerate) {
  std::mt19937_64 rng(6);
  const auto a = random_cloud(rng, 100, 0.5);
  const auto b = rigid_transform(a, axis_angle(rng, 0.0), {10.0, 0.0, 0.0});
  try {
    icp_register(a, b);
    FAIL() << "expected DegenerateRegistration";
  } catch (const DegenerateRegistration& e) {
    EXPECT_EQ(e.partial().inliers, 0u);
    EXPECT_EQ(e.partial().fitness, 0.0);
    EXPECT_EQ(e.partial().iterations, 0u);
  }
  // Centroid pre-alignment brings them together.
  IcpOptions o;
  o.centroid_prealign = true;
  EXPECT_EQ(icp_register(a, b, o).fitness, 1.0);
}

// Random rigid motions of random clouds with partial overlap and noise: the objective
// history never rises and the rotation is always proper.
TEST(Icp, ObjectiveIsMonotoneAndRotationProper) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + rng() % 300;
    const auto source = random_cloud(rng, n);
    auto target = rigid_transform(source, axis_angle(rng, 0.5), random_translation(rng, 0.3));
    target.points.resize(n / 2 + rng() % (n / 2));
    for (auto& p : target.points)
      for (auto& x : p) x += noise(rng);
    IcpOptions o;
    o.threshold = 0.1 + 0.4 * std::uniform_real_distribution<double>()(rng);
    try {
      const auto r = icp_register(source, target, o);
      for (std::size_t k = 1; k < r.mse_history.size(); ++k) ASSERT_LE(r.mse_history[k], r.mse_history[k - 1]);
      EXPECT_EQ(r.mse_history.size(), r.iterations + 1);
      EXPECT_LE(r.iterations, o.max_iter);
      EXPECT_LT(orthonormality_error(r.rotation), 1e-9);
      EXPECT_NEAR(det(r.rotation), 1.0, 1e-9);
      EXPECT_GE(r.fitness, 0.0);
      EXPECT_LE(r.fitness, 1.0);
      EXPECT_LE(r.inlier_rmse, o.threshold);
    } catch (const DegenerateRegistration& e) {
      EXPECT_LT(e.partial().inliers, 3u);
    }
  }
}

TEST(Icp, RejectsBadInputs) {
  std::mt19937_64 rng(8);
  const auto c = random_cloud(rng, 10);
  EXPECT_THROW(icp_register(PointCloud{}, c), DataError);
  EXPECT_THROW(icp_register(c, PointCloud{}), DataError);
  IcpOptions o;
  o.threshold = 0.0;
  EXPECT_THROW(icp_register(c, c, o), ConfigError);
}

TEST(Latency, Percentiles) {
  EXPECT_EQ(percentile({5, 1, 4, 2, 3}, 50), 3);
  EXPECT_EQ(percentile({5, 1, 4, 2, 3}, 95), 5);
  EXPECT_EQ(percentile({7}, 50), 7);
  EXPECT_EQ(percentile({1, 2, 3, 4}, 50), 2);
  EXPECT_THROW(percentile({}, 50), ConfigError);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + rng() % 50);
    for (auto& x : v) x = std::uniform_real_distribution<double>(0, 10)(rng);
    const auto s = latency_stats(v);
    EXPECT_LE(s.p50_ms, s.p95_ms);
    EXPECT_LE(s.min_ms, s.mean_ms);
    EXPECT_LE(s.mean_ms, s.max_ms);
    EXPECT_EQ(s.runs, v.size());
  }
}

TEST(Latency, BenchTinyFasterThanFull) {
  std::mt19937_64 rng(10);
  const model::Model tiny(model::ModelConfig::tiny(), 1);
  const auto s = bench_latency(tiny, testing::random_input(tiny.config(), rng), 1, 10);
  EXPECT_EQ(s.runs, 10u);
  EXPECT_EQ(s.samples_ms.size(), 10u);
  EXPECT_LE(s.min_ms, s.mean_ms);
  EXPECT_LE(s.mean_ms, s.max_ms);
  EXPECT_LE(s.p50_ms, s.p95_ms);
  const model::Model full(model::ModelConfig{}, 1);
  const auto f = bench_latency(full, testing::random_input(full.config(), rng), 0, 1);
  EXPECT_LT(s.mean_ms, f.mean_ms);
  EXPECT_THROW(bench_latency(tiny, testing::random_input(tiny.config(), rng), 0, 0), ConfigError);
}

class EvaluateTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto dir = testing::fresh_temp_dir("eval_data");
    synth::DatasetConfig c;
    c.n = 6;
    c.seed = 4;
    c.slices = 5;
    c.scene.antennas = 2;
    c.rf.subcarriers = 4;
    synth::make_dataset(c, dir);
    examples_ = csi::load_split(dir, "", 16);
  }
  static inline std::vector<csi::Example> examples_;
};

TEST_F(EvaluateTest, OracleGivesPerfectScores) {
  const auto report = evaluate([](const csi::Example& ex) { return ex.cloud; }, examples_);
  EXPECT_EQ(report.mean_fitness, 1.0);
  EXPECT_EQ(report.mean_rmse, 0.0);
  EXPECT_EQ(report.degenerate, 0u);
  ASSERT_EQ(report.samples.size(), examples_.size());
  EXPECT_EQ(report.samples[2].id, examples_[2].id);
}

TEST_F(EvaluateTest, DegenerateSamplesAreFlaggedNotFatal) {
  std::size_t calls = 0;
  const auto report = evaluate(
      [&calls](const csi::Example& ex) {
        PointCloud c = ex.cloud;
        if (calls++ % 2 == 0)
          for (auto& p : c.points) p[0] += 100.0;
        return c;
      },
      examples_);
  EXPECT_EQ(report.degenerate, 3u);
  EXPECT_DOUBLE_EQ(report.mean_fitness, 0.5);
  EXPECT_EQ(report.mean_rmse, 0.0);
  EXPECT_TRUE(report.samples[0].degenerate);
  EXPECT_TRUE(std::isnan(report.samples[0].rmse));
  const auto j = to_json(report);
  EXPECT_TRUE(j["samples"][0]["rmse"].is_null());
  EXPECT_EQ(j["degenerate"], 3);
  const auto csv = to_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,fitness,rmse,iterations,degenerate");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST_F(EvaluateTest, AggregatesArePermutationInvariantMeans) {
  std::mt19937_64 rng(11);
  const model::Model m(model::ModelConfig::tiny(), 3);
  IcpOptions o;
  o.threshold = 0.8;
  const auto base = evaluate(m, examples_, o);
  double f = 0.0;
  for (const auto& s : base.samples) f += s.fitness;
  EXPECT_NEAR(base.mean_fitness, f / static_cast<double>(base.samples.size()), 1e-15);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = examples_;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto r = evaluate(m, shuffled, o);
    EXPECT_EQ(r.mean_fitness, base.mean_fitness);
    if (!std::isnan(base.mean_rmse)) {
      EXPECT_EQ(r.mean_rmse, base.mean_rmse);
    }
  }
}

TEST_F(EvaluateTest, Errors) {
  const model::Model m(model::ModelConfig::tiny(), 3);
  EXPECT_THROW(evaluate(m, {}), ConfigError);
  const model::Model wrong(model::ModelConfig{}, 3);
  EXPECT_THROW(evaluate(wrong, examples_), ShapeError);
}

}  // namespace
}  // namespace c2pc::eval
