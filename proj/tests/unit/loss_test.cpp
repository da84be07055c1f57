#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "c2pc/diffmath/grad_check.hpp"
#include "c2pc/diffmath/ops.hpp"
#include "c2pc/errors.hpp"
#include "c2pc/loss/loss.hpp"

using namespace c2pc;
using namespace c2pc::loss;

namespace {

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double half = 1.0) {
  std::uniform_real_distribution<double> u(-half, half);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
  return c;
}

// Row-major 3x3 rotation from an axis and angle (Rodrigues).
std::vector<double> rotation(Point3 axis, double angle) {
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  const double x = axis[0] / n, y = axis[1] / n, z = axis[2] / n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  return {t * x * x + c,     t * x * y - s * z, t * x * z + s * y, t * x * y + s * z, t * y * y + c,
          t * y * z - s * x, t * x * z - s * y, t * y * z + s * x, t * z * z + c};
}

// Random orthogonal K x K matrix: Gram-Schmidt on a Gaussian matrix, random sign flip.
std::vector<double> random_orthogonal(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> g;
  std::vector<double> q(k * k);
  for (auto& v : q) v = g(rng);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < k; ++c) d += q[i * k + c] * q[j * k + c];
      for (std::size_t c = 0; c < k; ++c) q[i * k + c] -= d * q[j * k + c];
    }
    double n = 0.0;
    for (std::size_t c = 0; c < k; ++c) n += q[i * k + c] * q[i * k + c];
    n = std::sqrt(n);
    for (std::size_t c = 0; c < k; ++c) q[i * k + c] /= n;
  }
  if (rng() & 1) {
    for (std::size_t c = 0; c < k; ++c) q[c] = -q[c];
  }
  return q;
}

double reg_of(std::size_t k, std::vector<double> values) {
  return feature_transform_reg(dm::Tensor::from({k, k}, std::move(values))).item();
}

}  // namespace

TEST(Chamfer, HandExamples) {
  EXPECT_EQ(chamfer(PointCloud{{{0, 0, 0}}}, PointCloud{{{1, 0, 0}}}), 2.0);
  EXPECT_EQ(chamfer(PointCloud{{{0, 0, 0}, {2, 0, 0}}}, PointCloud{{{1, 0, 0}}}), 2.0);
}

TEST(Chamfer, IdenticalCloudsGiveZero) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 7u, 300u, 2500u}) {
    const PointCloud p = random_cloud(rng, n);
    EXPECT_EQ(chamfer(p, p), 0.0);
  }
}

TEST(Chamfer, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(1, 64);
  for (int trial = 0; trial < 200; ++trial) {
    const PointCloud p = random_cloud(rng, size(rng)), q = random_cloud(rng, size(rng));
    EXPECT_NEAR(chamfer(p, q), chamfer_brute_force(p, q), 1e-12);
  }
}

TEST(Chamfer, KdTreePathMatchesOracle) {
  std::mt19937_64 rng(3);
  const PointCloud p = random_cloud(rng, 2100), q = random_cloud(rng, 2300);
  EXPECT_NEAR(chamfer(p, q), chamfer_brute_force(p, q), 1e-12);
}

TEST(Chamfer, NonNegativeSymmetricAndTranslationInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> shift(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud p = random_cloud(rng, 32), q = random_cloud(rng, 32);
    const double cd = chamfer(p, q);
    EXPECT_GT(cd, 0.0);
    EXPECT_NEAR(cd, chamfer(q, p), 1e-15);
    const Point3 v{shift(rng), shift(rng), shift(rng)};
    PointCloud pv = p, qv = q;
    for (auto& x : pv.points) x = {x[0] + v[0], x[1] + v[1], x[2] + v[2]};
    for (auto& x : qv.points) x = {x[0] + v[0], x[1] + v[1], x[2] + v[2]};
    EXPECT_NEAR(chamfer(pv, qv), cd, 1e-10);
  }
}

TEST(Chamfer, ZeroForSameSetWithDuplicatesAndPermutation) {
  PointCloud p{{{0, 0, 0}, {1, 2, 3}, {1, 2, 3}}}, q{{{1, 2, 3}, {0, 0, 0}}};
  EXPECT_EQ(chamfer(p, q), 0.0);
  q.points.push_back({0, 0, 1e-3});
  EXPECT_GT(chamfer(p, q), 0.0);
}

TEST(Chamfer, EmptyCloudThrows) {
  EXPECT_THROW(chamfer(PointCloud{}, PointCloud{{{0, 0, 0}}}), DataError);
  EXPECT_THROW(chamfer(PointCloud{{{0, 0, 0}}}, PointCloud{}), DataError);
  EXPECT_THROW(chamfer(dm::Tensor::zeros({2, 2}), dm::Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(chamfer_brute_force(PointCloud{}, PointCloud{{{0, 0, 0}}}), DataError);
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    dm::Tensor p = cloud_to_tensor(random_cloud(rng, 9), true);
    dm::Tensor q = cloud_to_tensor(random_cloud(rng, 13), true);
    const auto report = dm::grad_check([&] { return chamfer(p, q); }, {{"P", p}, {"Q", q}});
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(Regularizer, IdentityIsZero) {
  for (std::size_t k : {1u, 3u, 8u, 64u}) {
    std::vector<double> eye(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
    EXPECT_EQ(reg_of(k, eye), 0.0);
  }
}

TEST(Regularizer, TwiceIdentityGivesThree) {
  EXPECT_NEAR(reg_of(3, {2, 0, 0, 0, 2, 0, 0, 0, 2}), 3.0, 1e-12);
}

TEST(Regularizer, RotationsAreNearZero) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0), angle(-std::numbers::pi, std::numbers::pi);
  for (int trial = 0; trial < 100; ++trial) {
    EXPECT_LE(reg_of(3, rotation({u(rng), u(rng), u(rng)}, angle(rng))), 1e-12);
  }
}

TEST(Regularizer, RightOrthogonalInvariance) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 7;
    std::vector<double> t(k * k);
    for (auto& v : t) v = g(rng);
    const dm::Tensor tf = dm::Tensor::from({k, k}, t);
    const dm::Tensor r = dm::Tensor::from({k, k}, random_orthogonal(rng, k));
    EXPECT_NEAR(feature_transform_reg(dm::matmul(tf, r)).item(), feature_transform_reg(tf).item(), 1e-10);
  }
}

TEST(Regularizer, NonSquareThrows) {
  EXPECT_THROW(feature_transform_reg(dm::Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(feature_transform_reg(dm::Tensor::zeros({4})), ShapeError);
}

TEST(Regularizer, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<double> t(16);
  for (auto& v : t) v = g(rng);
  dm::Tensor tf = dm::Tensor::from({4, 4}, t, true);
  const auto report = dm::grad_check([&] { return feature_transform_reg(tf); }, {{"T_f", tf}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(TotalLoss, Examples) {
  const dm::Tensor p = cloud_to_tensor(PointCloud{{{0, 0, 0}}});
  const dm::Tensor q = cloud_to_tensor(PointCloud{{{1, 0, 0}}});
  const dm::Tensor two_i = dm::Tensor::from({3, 3}, {2, 0, 0, 0, 2, 0, 0, 0, 2});
  const dm::Tensor eye = dm::Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_NEAR(total_loss(p, q, two_i, {0.001}).item(), 2.003, 1e-12);
  EXPECT_EQ(total_loss(p, q, two_i, {0.0}).item(), 2.0);
  EXPECT_EQ(total_loss(q, q, eye, {0.001}).item(), 0.0);
  EXPECT_THROW(total_loss(p, q, eye, {-1.0}), ConfigError);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.5);
  dm::Tensor pred = cloud_to_tensor(random_cloud(rng, 12), true);
  const dm::Tensor gt = cloud_to_tensor(random_cloud(rng, 10));
  std::vector<double> t(9);
  for (auto& v : t) v = g(rng);
  dm::Tensor tf = dm::Tensor::from({3, 3}, t, true);
  const auto report =
      dm::grad_check([&] { return total_loss(pred, gt, tf, {0.5}); }, {{"P_pred", pred}, {"T_f", tf}});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(TotalLoss, BatchIsMeanOfChamfers) {
  std::mt19937_64 rng(10);
  std::vector<dm::Tensor> pred, gt;
  double expected = 0.0;
  for (int b = 0; b < 3; ++b) {
    const PointCloud p = random_cloud(rng, 20), q = random_cloud(rng, 20);
    pred.push_back(cloud_to_tensor(p));
    gt.push_back(cloud_to_tensor(q));
    expected += chamfer_brute_force(p, q) / 3.0;
  }
  double mean_cd = 0.0;
  const dm::Tensor eye = dm::Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(batch_total_loss(pred, gt, eye, {}, &mean_cd).item(), expected, 1e-12);
  EXPECT_NEAR(mean_cd, expected, 1e-12);
}
