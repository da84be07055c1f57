#include "c2pc/kernels/nearest.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace c2pc::kernels {
namespace {

void require_target(std::span<const Point3> target) {
  if (target.empty()) throw std::invalid_argument("nearest neighbour search: empty target cloud");
}

// Strict '<' keeps the first (lowest-index) minimum when scanning in index order.
std::pair<std::size_t, double> scan(const Point3& q, std::span<const Point3> target) {
  std::size_t best = 0;
  double best_d = squared_distance(q, target[0]);
  for (std::size_t j = 1; j < target.size(); ++j) {
    const double d = squared_distance(q, target[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return {best, best_d};
}

constexpr std::size_t kLeafSize = 12;

}  // namespace

NeighborResult nearest_brute_reference(std::span<const Point3> query, std::span<const Point3> target) {
  require_target(target);
  NeighborResult out;
  out.index.resize(query.size());
  out.sq_distance.resize(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    std::tie(out.index[i], out.sq_distance[i]) = scan(query[i], target);
  }
  return out;
}

NeighborResult nearest_brute(std::span<const Point3> query, std::span<const Point3> target) {
  require_target(target);
  NeighborResult out;
  out.index.resize(query.size());
  out.sq_distance.resize(query.size());
  const auto nq = static_cast<std::ptrdiff_t>(query.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < nq; ++i) {
    std::tie(out.index[i], out.sq_distance[i]) = scan(query[i], target);
  }
  return out;
}

KdTree::KdTree(std::span<const Point3> points) : points_(points.begin(), points.end()) {
  require_target(points);
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kLeafSize) return id;

  Point3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_[order_[i]][a]);
      hi[a] = std::max(hi[a], points_[order_[i]][a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t x, std::size_t y) { return points_[x][axis] < points_[y][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::size_t node_id, const Point3& q, std::size_t& best, double& best_d) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = squared_distance(q, points_[idx]);
      if (d < best_d || (d == best_d && idx < best)) {
        best_d = d;
        best = idx;
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff <= 0.0 ? node.left : node.right;
  const std::size_t far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best, best_d);
  // Equal distance must still be explored so lower-index ties are found.
  if (diff * diff <= best_d) search(far, q, best, best_d);
}

std::pair<std::size_t, double> KdTree::nearest(const Point3& q) const {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d = std::numeric_limits<double>::infinity();
  search(0, q, best, best_d);
  return {best, best_d};
}

NeighborResult KdTree::query(std::span<const Point3> queries) const {
  NeighborResult out;
  out.index.resize(queries.size());
  out.sq_distance.resize(queries.size());
  const auto nq = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < nq; ++i) {
    std::tie(out.index[i], out.sq_distance[i]) = nearest(queries[i]);
  }
  return out;
}

NeighborResult nearest_auto(std::span<const Point3> query, std::span<const Point3> target) {
  if (target.size() < kKdTreeThreshold) return nearest_brute(query, target);
  return KdTree(target).query(query);
}

}  // namespace c2pc::kernels
