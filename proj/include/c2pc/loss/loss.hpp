#pragma once

#include <vector>

#include "c2pc/csidata/point_cloud.hpp"
#include "c2pc/diffmath/tensor.hpp"

namespace c2pc::loss {

struct LossConfig {
  double lambda = 0.001;
};

/// Symmetric Chamfer distance between point sets P [N_p x 3] and Q [N_q x 3]:
///   mean_p min_q |p - q|^2 + mean_q min_p |q - p|^2
/// Differentiable in both arguments. Nearest neighbours come from kernels::nearest_auto,
/// ties go to the lowest index. Throws DataError on an empty cloud.
dm::Tensor chamfer(const dm::Tensor& p, const dm::Tensor& q);
double chamfer(const PointCloud& p, const PointCloud& q);

/// O(N_p * N_q) evaluation of the same quantity, used as the test oracle.
double chamfer_brute_force(const PointCloud& p, const PointCloud& q);

/// (1 / K^2) * |T T^T - I|_F^2 for a square K x K matrix. Throws ShapeError otherwise.
dm::Tensor feature_transform_reg(const dm::Tensor& transform);

/// chamfer(pred, gt) + lambda * feature_transform_reg(transform).
dm::Tensor total_loss(const dm::Tensor& pred, const dm::Tensor& gt, const dm::Tensor& transform,
                      const LossConfig& config);

/// Batch objective: mean over items of chamfer(pred[b], gt[b]) plus one regulariser term.
/// Also reports the mean Chamfer part through `mean_chamfer` when non-null.
dm::Tensor batch_total_loss(const std::vector<dm::Tensor>& pred, const std::vector<dm::Tensor>& gt,
                            const dm::Tensor& transform, const LossConfig& config, double* mean_chamfer = nullptr);

}  // namespace c2pc::loss
