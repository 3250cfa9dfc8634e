#include "leafwood/spatial_index.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "leafwood/errors.hpp"

namespace leafwood {

namespace {

double coord(const Point3& p, int axis) {
  return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}

}  // namespace

SpatialIndex::SpatialIndex(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (points_.empty()) throw ContractError("cannot index an empty point set");
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * (points_.size() / leaf_size_ + 1));
  build(0, order_.size());
}

std::size_t SpatialIndex::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  std::array<double, 3> lo{coord(points_[order_[begin]], 0), coord(points_[order_[begin]], 1),
                           coord(points_[order_[begin]], 2)};
  auto hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    for (int a = 0; a < 3; ++a) {
      const double v = coord(points_[order_[i]], a);
      lo[a] = std::min(lo[a], v);
      hi[a] = std::max(hi[a], v);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as one leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     return coord(points_[a], axis) < coord(points_[b], axis);
                   });
  const double split = coord(points_[order_[mid]], axis);
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void SpatialIndex::search(std::size_t node_id, const Point3& q, double r2,
                          std::vector<std::size_t>& out) const {
  const Node& n = nodes_[node_id];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      if (squared_distance(points_[order_[i]], q) <= r2) out.push_back(order_[i]);
    }
    return;
  }
  // Left holds coords <= split, right holds coords >= split.
  const double d = coord(q, n.axis) - n.split;
  if (d <= 0.0 || d * d <= r2) search(n.left, q, r2, out);
  if (d >= 0.0 || d * d <= r2) search(n.right, q, r2, out);
}

void SpatialIndex::radius_search(const Point3& query, double radius_m,
                                 std::vector<std::size_t>& out) const {
  if (!(radius_m > 0.0)) throw ContractError("radius must be positive");
  out.clear();
  search(0, query, radius_m * radius_m, out);
  std::sort(out.begin(), out.end());
}

Neighborhood SpatialIndex::radius_query(std::size_t center_index, double radius_m) const {
  if (center_index >= points_.size()) {
    throw ContractError("center index " + std::to_string(center_index) +
                        " out of range for " + std::to_string(points_.size()) + " points");
  }
  Neighborhood nb{center_index, {}, radius_m};
  radius_search(points_[center_index], radius_m, nb.member_indices);
  return nb;
}

SpatialIndex build_index(const LabeledCloud& cloud) {
  if (cloud.empty()) throw ContractError("cannot index an empty cloud");
  return SpatialIndex(cloud.points());
}

}  // namespace leafwood
