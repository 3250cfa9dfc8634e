#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "leafwood/cloud.hpp"

namespace leafwood {

/// The points of a cloud within `radius_m` of the point at `center_index`
/// (closed ball). `member_indices` is ascending and contains the center.
struct Neighborhood {
  std::size_t center_index = 0;
  std::vector<std::size_t> member_indices;
  double radius_m = 0.0;
};

/// Static 3-d tree over a point set answering exact fixed-radius queries.
///
/// Membership uses `squared distance <= r*r` everywhere. The index owns a
/// copy of the coordinates and is immutable after construction, so
/// concurrent queries are safe.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::span<const Point3> points, std::size_t leaf_size = 16);

  std::size_t size() const noexcept { return points_.size(); }
  std::span<const Point3> points() const noexcept { return points_; }

  Neighborhood radius_query(std::size_t center_index, double radius_m) const;

  /// Appends to `out` (after clearing it) the ascending indices of every point
  /// within `radius_m` of `query`.
  void radius_search(const Point3& query, double radius_m,
                     std::vector<std::size_t>& out) const;

 private:
  struct Node {
    // Leaves: [begin, end) into order_. Inner nodes: children + split plane.
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Point3& q, double r2,
              std::vector<std::size_t>& out) const;

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

/// Builds an index over every point of `cloud`. Throws ContractError when empty.
SpatialIndex build_index(const LabeledCloud& cloud);

}  // namespace leafwood
