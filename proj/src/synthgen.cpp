#include "leafwood/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "leafwood/errors.hpp"

namespace leafwood {

void validate(const SynthTreeSpec& s) {
  const bool lengths_ok = s.trunk_radius_m > 0 && s.trunk_height_m > 0 &&
                          s.branch_radius_m > 0 && s.branch_length_m > 0 &&
                          s.leaf_cluster_sigma_m > 0 && s.surface_sample_pitch_m > 0;
  if (!lengths_ok) throw ContractError("synthetic tree lengths must all be positive");
  if (s.surface_sample_pitch_m >= std::min(s.trunk_radius_m, s.branch_radius_m)) {
    throw ContractError("sample pitch must be smaller than the smallest radius");
  }
  if (s.leaf_cluster_count > 0 && s.leaf_points_per_cluster == 0) {
    throw ContractError("leaf clusters need at least one point each");
  }
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Point3 cross(const Point3& a, const Point3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

std::size_t steps(double length, double pitch) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(length / pitch)));
}

struct Branch {
  Point3 base;
  Point3 axis;  // unit
};

}  // namespace

LabeledCloud generate_tree(const SynthTreeSpec& s, SynthTreeCounts* counts) {
  validate(s);
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Point3> pts;
  std::vector<ClassLabel> labels;
  SynthTreeCounts n;
  const double pitch = s.surface_sample_pitch_m;

  const std::size_t trunk_ring = steps(kTwoPi * s.trunk_radius_m, pitch);
  const std::size_t trunk_rows = steps(s.trunk_height_m, pitch);
  const double trunk_dz = s.trunk_height_m / static_cast<double>(trunk_rows);
  for (std::size_t row = 0; row < trunk_rows; ++row) {
    const double z = (static_cast<double>(row) + 0.5) * trunk_dz;
    for (std::size_t k = 0; k < trunk_ring; ++k) {
      const double a = kTwoPi * static_cast<double>(k) / static_cast<double>(trunk_ring);
      pts.push_back({s.trunk_radius_m * std::cos(a), s.trunk_radius_m * std::sin(a), z});
    }
  }
  n.trunk = pts.size();

  std::vector<Branch> branches;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t b = 0; b < s.branch_count; ++b) {
    const double frac = (static_cast<double>(b) + 0.5) / static_cast<double>(s.branch_count);
    const double h = s.trunk_height_m * (0.45 + 0.5 * frac + 0.04 * (unit(rng) - 0.5));
    const double azimuth = golden * static_cast<double>(b) + 0.6 * (unit(rng) - 0.5);
    const double elevation = (20.0 + 35.0 * unit(rng)) * std::numbers::pi / 180.0;
    const Point3 radial{std::cos(azimuth), std::sin(azimuth), 0.0};
    branches.push_back({radial * s.trunk_radius_m + Point3{0, 0, h},
                        {std::cos(elevation) * radial.x, std::cos(elevation) * radial.y,
                         std::sin(elevation)}});
  }

  const std::size_t branch_ring = steps(kTwoPi * s.branch_radius_m, pitch);
  const std::size_t branch_rows = steps(s.branch_length_m, pitch);
  const double dt = s.branch_length_m / static_cast<double>(branch_rows);
  for (const Branch& br : branches) {
    // Any unit vector not parallel to the axis seeds the ring frame.
    const Point3 helper = std::abs(br.axis.z) < 0.9 ? Point3{0, 0, 1} : Point3{1, 0, 0};
    Point3 u = cross(br.axis, helper);
    u = u / norm(u);
    const Point3 v = cross(br.axis, u);
    for (std::size_t row = 0; row < branch_rows; ++row) {
      const double t = (static_cast<double>(row) + 0.5) * dt;
      for (std::size_t k = 0; k < branch_ring; ++k) {
        const double a = kTwoPi * static_cast<double>(k) / static_cast<double>(branch_ring);
        const Point3 p = br.base + br.axis * t +
                         (u * std::cos(a) + v * std::sin(a)) * s.branch_radius_m;
        // Drop the part buried inside the trunk.
        if (std::hypot(p.x, p.y) < s.trunk_radius_m && p.z <= s.trunk_height_m) continue;
        pts.push_back(p);
      }
    }
  }
  n.branch = pts.size() - n.trunk;
  labels.assign(pts.size(), ClassLabel::wood);

  for (std::size_t c = 0; c < s.leaf_cluster_count; ++c) {
    Point3 center;
    if (branches.empty()) {
      const double a = kTwoPi * unit(rng);
      center = Point3{std::cos(a), std::sin(a), 0.0} * (s.trunk_radius_m + s.leaf_cluster_sigma_m) +
               Point3{0, 0, s.trunk_height_m};
    } else {
      const Branch& br = branches[c % branches.size()];
      center = br.base + br.axis * (s.branch_length_m + 1.5 * s.leaf_cluster_sigma_m);
    }
    for (std::size_t i = 0; i < s.leaf_points_per_cluster; ++i) {
      const double gx = gauss(rng);
      const double gy = gauss(rng);
      const double gz = gauss(rng);
      pts.push_back(center + Point3{gx, gy, gz} * s.leaf_cluster_sigma_m);
    }
  }
  n.leaf = pts.size() - n.trunk - n.branch;
  labels.resize(pts.size(), ClassLabel::leaf);

  if (counts) *counts = n;
  return LabeledCloud(std::move(pts), std::move(labels));
}

}  // namespace leafwood
