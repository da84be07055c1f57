#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "c2pc/geometry.hpp"

namespace c2pc::kernels {

struct NeighborResult {
  std::vector<std::size_t> index;
  std::vector<double> sq_distance;
};

// All nearest-neighbour routines are exact and break distance ties towards the lowest
// target index, so every implementation returns identical results.

NeighborResult nearest_brute_reference(std::span<const Point3> query, std::span<const Point3> target);
NeighborResult nearest_brute(std::span<const Point3> query, std::span<const Point3> target);

class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points);

  std::size_t size() const { return points_.size(); }
  std::pair<std::size_t, double> nearest(const Point3& q) const;
  NeighborResult query(std::span<const Point3> queries) const;

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis;                // -1 for leaf
    double split;
    std::size_t left, right;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Point3& q, std::size_t& best, double& best_d) const;

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

// Brute force below this many target points, KD-tree at or above.
inline constexpr std::size_t kKdTreeThreshold = 64;

NeighborResult nearest_auto(std::span<const Point3> query, std::span<const Point3> target);

}  // namespace c2pc::kernels
