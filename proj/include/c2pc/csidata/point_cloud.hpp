#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "c2pc/diffmath/tensor.hpp"
#include "c2pc/geometry.hpp"

namespace c2pc {

/// Ordered 3-D points in metres.
struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const PointCloud&) const = default;
};

/// Throws DataError when the cloud is empty or holds non-finite coordinates.
void validate(const PointCloud& cloud);

PointCloud cloud_from_tensor(const dm::Tensor& points);  // [N x 3]
dm::Tensor cloud_to_tensor(const PointCloud& cloud, bool requires_grad = false);

namespace csi {

/// Resizes a cloud to exactly n points. With at least n input points, picks a uniform
/// random subset without replacement (partial Fisher-Yates, index j = i + r % (N - i))
/// and keeps the chosen points in their original order; otherwise draws n indices
/// uniformly with replacement (r % N). r comes from std::mt19937_64 seeded with `seed`.
PointCloud resample_cloud(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

}  // namespace csi
}  // namespace c2pc
