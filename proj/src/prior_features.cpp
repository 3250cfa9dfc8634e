#include "leafwood/prior_features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "leafwood/errors.hpp"
#include "leafwood/parallel.hpp"

namespace leafwood {

CenteredNeighborhood centralize(std::span<const Point3> points) {
  if (points.empty()) throw ContractError("cannot centralize an empty neighborhood");
  Point3 sum;
  for (const auto& p : points) sum += p;
  CenteredNeighborhood out;
  out.mean = sum / static_cast<double>(points.size());
  out.centered_points.reserve(points.size());
  for (const auto& p : points) out.centered_points.push_back(p - out.mean);
  return out;
}

std::optional<Covariance3> covariance(const CenteredNeighborhood& centered) {
  const std::size_t n = centered.count();
  if (n < 2) return std::nullopt;
  double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;
  for (const auto& c : centered.centered_points) {
    xx += c.x * c.x;
    xy += c.x * c.y;
    xz += c.x * c.z;
    yy += c.y * c.y;
    yz += c.y * c.z;
    zz += c.z * c.z;
  }
  const double k = 1.0 / static_cast<double>(n - 1);
  Covariance3 s;
  s.m = {{{xx * k, xy * k, xz * k}, {xy * k, yy * k, yz * k}, {xz * k, yz * k, zz * k}}};
  return s;
}

EigenTriple eigenvalues_sym3(const Covariance3& sigma) {
  double scale = 0.0;
  for (const auto& row : sigma.m) {
    for (double v : row) {
      if (!std::isfinite(v)) throw ContractError("covariance has a non-finite entry");
      scale = std::max(scale, std::abs(v));
    }
  }
  const double sym_tol = 1e-12 * std::max(1.0, scale);
  for (int r = 0; r < 3; ++r) {
    for (int c = r + 1; c < 3; ++c) {
      if (std::abs(sigma.m[r][c] - sigma.m[c][r]) > sym_tol) {
        throw ContractError("covariance matrix is not symmetric");
      }
    }
  }

  auto a = sigma.m;
  for (int r = 0; r < 3; ++r) {
    for (int c = r + 1; c < 3; ++c) a[r][c] = a[c][r] = 0.5 * (a[r][c] + a[c][r]);
  }

  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
    if (off <= eps * eps * diag * 1e-4 || off == 0.0) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with the (p, q) plane rotation that zeroes a[p][q].
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        a[p][q] = a[q][p] = 0.0;
      }
    }
  }

  std::array<double, 3> ev{a[0][0], a[1][1], a[2][2]};
  std::sort(ev.begin(), ev.end(), std::greater<>());
  for (double& v : ev) {
    if (v < 0.0 && v >= -1e-10) v = 0.0;
  }
  return {ev[0], ev[1], ev[2]};
}

double linearity(const EigenTriple& eigs) {
  if (!(eigs.l1 > 0.0)) return 0.0;
  return std::clamp((eigs.l1 - eigs.l2) / eigs.l1, 0.0, 1.0);
}

LinearityField compute_linearity_field(const LabeledCloud& cloud, const SpatialIndex& index,
                                       double radius_m) {
  if (!(radius_m > 0.0)) throw ContractError("radius must be positive");
  if (index.size() != cloud.size()) {
    throw ContractError("spatial index was built over a different cloud");
  }
  LinearityField field{std::vector<double>(cloud.size(), 0.0), radius_m};
  const auto pts = cloud.points();
  parallel_for(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<Point3> members;
    for (std::size_t i = begin; i < end; ++i) {
      const Neighborhood nb = index.radius_query(i, radius_m);
      if (nb.member_indices.size() < 3) continue;
      members.clear();
      for (std::size_t m : nb.member_indices) members.push_back(pts[m]);
      const auto sigma = covariance(centralize(members));
      field.values[i] = linearity(eigenvalues_sym3(*sigma));
    }
  });
  return field;
}

}  // namespace leafwood
