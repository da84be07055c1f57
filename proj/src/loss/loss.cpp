#include "c2pc/loss/loss.hpp"

#include <limits>

#include "c2pc/diffmath/ops.hpp"
#include "c2pc/errors.hpp"
#include "c2pc/kernels/gemm.hpp"
#include "c2pc/kernels/nearest.hpp"

namespace c2pc::loss {
namespace {

std::vector<Point3> as_points(const dm::Tensor& t, const char* name) {
  if (t.rank() != 2 || t.dim(1) != 3) {
    throw ShapeError(std::string("chamfer: ") + name + " must be [N x 3], got " + dm::to_string(t.shape()));
  }
  if (t.dim(0) == 0) throw DataError(std::string("chamfer: ") + name + " is an empty point cloud");
  std::vector<Point3> pts(t.dim(0));
  const auto v = t.data();
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return pts;
}

std::span<double> grad_sink(dm::Tensor t) {
  if (!t.requires_grad()) return {};
  return t.grad();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

dm::Tensor chamfer(const dm::Tensor& p, const dm::Tensor& q) {
  const auto pp = as_points(p, "P");
  const auto qq = as_points(q, "Q");
  auto fwd = kernels::nearest_auto(pp, qq);
  auto bwd = kernels::nearest_auto(qq, pp);
  const double value = mean_of(fwd.sq_distance) + mean_of(bwd.sq_distance);

  return dm::Tensor::make_op(
      "chamfer", {}, {value}, {p, q},
      [p, q, fi = std::move(fwd.index), bi = std::move(bwd.index)](std::span<const double>, std::span<const double> g) {
        const auto pv = p.data(), qv = q.data();
        auto gp = grad_sink(p), gq = grad_sink(q);
        const double sp = 2.0 * g[0] / static_cast<double>(fi.size());
        const double sq = 2.0 * g[0] / static_cast<double>(bi.size());
        for (std::size_t i = 0; i < fi.size(); ++i) {
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = sp * (pv[3 * i + c] - qv[3 * fi[i] + c]);
            if (!gp.empty()) gp[3 * i + c] += d;
            if (!gq.empty()) gq[3 * fi[i] + c] -= d;
          }
        }
        for (std::size_t j = 0; j < bi.size(); ++j) {
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = sq * (qv[3 * j + c] - pv[3 * bi[j] + c]);
            if (!gq.empty()) gq[3 * j + c] += d;
            if (!gp.empty()) gp[3 * bi[j] + c] -= d;
          }
        }
      });
}

double chamfer(const PointCloud& p, const PointCloud& q) {
  if (p.empty() || q.empty()) throw DataError("chamfer: empty point cloud");
  dm::NoGradGuard guard;
  return chamfer(cloud_to_tensor(p), cloud_to_tensor(q)).item();
}

double chamfer_brute_force(const PointCloud& p, const PointCloud& q) {
  if (p.empty() || q.empty()) throw DataError("chamfer: empty point cloud");
  auto one_way = [](const PointCloud& a, const PointCloud& b) {
    double total = 0.0;
    for (const auto& x : a.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : b.points) best = std::min(best, squared_distance(x, y));
      total += best;
    }
    return total / static_cast<double>(a.size());
  };
  return one_way(p, q) + one_way(q, p);
}

dm::Tensor feature_transform_reg(const dm::Tensor& transform) {
  if (transform.rank() != 2 || transform.dim(0) != transform.dim(1)) {
    throw ShapeError("feature_transform_reg: expected a square matrix, got " + dm::to_string(transform.shape()));
  }
  const std::size_t k = transform.dim(0);
  const double inv_k2 = 1.0 / static_cast<double>(k * k);
  const auto tv = kernels::row_major(transform.data().data(), k);
  // M = T T^T - I, kept for the backward pass.
  std::vector<double> m(k * k);
  kernels::gemm(k, k, k, tv, tv.transposed(), m.data(), k);
  double value = 0.0;
  for (std::size_t i = 0; i < k; ++i) m[i * k + i] -= 1.0;
  for (double x : m) value += x * x;
  value *= inv_k2;

  return dm::Tensor::make_op("feature_transform_reg", {}, {value}, {transform},
                             [transform, k, inv_k2, m = std::move(m)](std::span<const double>,
                                                                      std::span<const double> g) {
                               auto gt = grad_sink(transform);
                               if (gt.empty()) return;
                               // d/dT |T T^T - I|^2 = 4 M T, M symmetric.
                               std::vector<double> mt(k * k);
                               kernels::gemm(k, k, k, kernels::row_major(m.data(), k),
                                             kernels::row_major(transform.data().data(), k), mt.data(), k);
                               const double s = 4.0 * inv_k2 * g[0];
                               for (std::size_t i = 0; i < mt.size(); ++i) gt[i] += s * mt[i];
                             });
}

dm::Tensor total_loss(const dm::Tensor& pred, const dm::Tensor& gt, const dm::Tensor& transform,
                      const LossConfig& config) {
  return batch_total_loss({pred}, {gt}, transform, config);
}

dm::Tensor batch_total_loss(const std::vector<dm::Tensor>& pred, const std::vector<dm::Tensor>& gt,
                            const dm::Tensor& transform, const LossConfig& config, double* mean_chamfer) {
  if (config.lambda < 0.0) throw ConfigError("loss lambda must be non-negative");
  if (pred.empty() || pred.size() != gt.size()) throw ShapeError("batch_total_loss: prediction/target count mismatch");
  dm::Tensor acc = chamfer(pred[0], gt[0]);
  for (std::size_t b = 1; b < pred.size(); ++b) acc = dm::add(acc, chamfer(pred[b], gt[b]));
  dm::Tensor cd = dm::scale(acc, 1.0 / static_cast<double>(pred.size()));
  if (mean_chamfer) *mean_chamfer = cd.item();
  return dm::add(cd, dm::scale(feature_transform_reg(transform), config.lambda));
}

}  // namespace c2pc::loss
