#include "c2pc/csidata/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "c2pc/errors.hpp"

namespace c2pc {

void validate(const PointCloud& cloud) {
  if (cloud.empty()) throw DataError("point cloud is empty");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (double c : cloud.points[i]) {
      if (!std::isfinite(c)) throw DataError("point cloud has a non-finite coordinate at point " + std::to_string(i));
    }
  }
}

PointCloud cloud_from_tensor(const dm::Tensor& points) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw ShapeError("expected an [N x 3] point tensor, got " + dm::to_string(points.shape()));
  }
  PointCloud cloud;
  cloud.points.resize(points.dim(0));
  auto v = points.data();
  for (std::size_t i = 0; i < cloud.size(); ++i) cloud.points[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return cloud;
}

dm::Tensor cloud_to_tensor(const PointCloud& cloud, bool requires_grad) {
  std::vector<double> v;
  v.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) v.insert(v.end(), p.begin(), p.end());
  return dm::Tensor::from({cloud.size(), 3}, std::move(v), requires_grad);
}

namespace csi {

PointCloud resample_cloud(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.empty()) throw DataError("resample_cloud: empty input cloud");
  if (n == 0) throw std::invalid_argument("resample_cloud: n must be positive");
  std::mt19937_64 rng(seed);
  const std::size_t N = cloud.size();
  PointCloud out;
  out.points.reserve(n);
  if (N >= n) {
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng() % (N - i)]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.points.push_back(cloud.points[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(cloud.points[rng() % N]);
  }
  return out;
}

}  // namespace csi
}  // namespace c2pc
