#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "leafwood/cloud.hpp"
#include "leafwood/spatial_index.hpp"

namespace leafwood {

/// Neighborhood points shifted so their mean is the origin.
struct CenteredNeighborhood {
  std::vector<Point3> centered_points;
  Point3 mean;
  std::size_t count() const noexcept { return centered_points.size(); }
};

/// Symmetric 3x3 sample covariance, row-major.
struct Covariance3 {
  std::array<std::array<double, 3>, 3> m{};
  double operator()(int r, int c) const { return m[r][c]; }
};

/// Eigenvalues sorted descending, tiny negatives clamped to zero.
struct EigenTriple {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

/// Per-point linearity aligned with cloud order, computed at `radius_m`.
struct LinearityField {
  std::vector<double> values;
  double radius_m = 0.0;
};

inline constexpr double kDefaultRadius = 0.15;

/// Throws ContractError on empty input.
CenteredNeighborhood centralize(std::span<const Point3> points);

/// (1/(n-1)) * C^T C over the n x 3 centered matrix C. Returns nullopt when
/// n < 2 (no sample covariance exists).
std::optional<Covariance3> covariance(const CenteredNeighborhood& centered);

/// Eigenvalues of a symmetric PSD matrix by cyclic Jacobi rotation. Throws
/// ContractError if the matrix is asymmetric beyond 1e-12 (relative to its
/// largest entry when that exceeds 1).
EigenTriple eigenvalues_sym3(const Covariance3& sigma);

/// (l1 - l2) / l1, or 0 when l1 == 0. Always in [0, 1].
double linearity(const EigenTriple& eigs);

/// Linearity of every point from its closed-ball neighborhood of `radius_m`.
/// Neighborhoods with fewer than 3 points yield 0. Work is split across
/// worker_count() threads; the result does not depend on the schedule.
LinearityField compute_linearity_field(const LabeledCloud& cloud, const SpatialIndex& index,
                                       double radius_m = kDefaultRadius);

}  // namespace leafwood
