#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "leafwood/errors.hpp"
#include "leafwood/prior_features.hpp"
#include "oracles.hpp"

namespace leafwood {
namespace {

TEST(Centralize, Examples) {
  auto c = centralize(std::vector<Point3>{{1, 2, 3}});
  EXPECT_EQ(c.mean, (Point3{1, 2, 3}));
  EXPECT_EQ(c.centered_points[0], (Point3{0, 0, 0}));

  c = centralize(std::vector<Point3>{{-1, 0, 0}, {1, 0, 0}});
  EXPECT_EQ(c.mean, (Point3{0, 0, 0}));
  EXPECT_EQ(c.centered_points[1], (Point3{1, 0, 0}));

  c = centralize(std::vector<Point3>{{0, 0, 0}, {2, 0, 0}, {4, 0, 0}});
  EXPECT_EQ(c.mean, (Point3{2, 0, 0}));
  EXPECT_EQ(c.centered_points[0], (Point3{-2, 0, 0}));
  EXPECT_EQ(c.centered_points[2], (Point3{2, 0, 0}));

  EXPECT_THROW(centralize(std::vector<Point3>{}), ContractError);
}

TEST(Centralize, CenteredMeanIsZero) {
  const auto pts = oracle::random_points(257, 1, 3.0);
  const auto c = centralize(pts);
  Point3 s;
  for (const auto& p : c.centered_points) s += p;
  EXPECT_NEAR(s.x / 257, 0.0, 1e-12);
  EXPECT_NEAR(s.y / 257, 0.0, 1e-12);
  EXPECT_NEAR(s.z / 257, 0.0, 1e-12);
}

TEST(Covariance, Examples) {
  auto s = covariance(centralize(std::vector<Point3>{{-1, 0, 0}, {1, 0, 0}}));
  ASSERT_TRUE(s);
  EXPECT_DOUBLE_EQ((*s)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ((*s)(1, 1), 0.0);

  s = covariance(centralize(std::vector<Point3>{{-2, 0, 0}, {0, 0, 0}, {2, 0, 0}}));
  EXPECT_DOUBLE_EQ((*s)(0, 0), 4.0);

  EXPECT_FALSE(covariance(centralize(std::vector<Point3>{{1, 1, 1}})));
}

TEST(Covariance, MatchesDoubleLoopOracle) {
  const auto pts = oracle::random_points(50, 17, 2.0);
  const auto s = *covariance(centralize(pts));
  const auto ref = oracle::sample_covariance(pts);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(s(r, c), ref(r, c), 1e-12);
      EXPECT_EQ(s(r, c), s(c, r));
    }
  }
}

TEST(Eigenvalues, Examples) {
  Covariance3 d;
  d.m = {{{4, 0, 0}, {0, 1, 0}, {0, 0, 0}}};
  auto e = eigenvalues_sym3(d);
  EXPECT_DOUBLE_EQ(e.l1, 4);
  EXPECT_DOUBLE_EQ(e.l2, 1);
  EXPECT_DOUBLE_EQ(e.l3, 0);

  d.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  e = eigenvalues_sym3(d);
  EXPECT_DOUBLE_EQ(e.l1, 1);
  EXPECT_DOUBLE_EQ(e.l3, 1);

  d.m = {{{0, 0, 0}, {0, 3, 0}, {0, 0, 2}}};
  e = eigenvalues_sym3(d);
  EXPECT_DOUBLE_EQ(e.l1, 3);
  EXPECT_DOUBLE_EQ(e.l2, 2);
}

TEST(Eigenvalues, RejectsAsymmetric) {
  Covariance3 d;
  d.m = {{{1, 0.5, 0}, {0, 1, 0}, {0, 0, 1}}};
  EXPECT_THROW(eigenvalues_sym3(d), ContractError);
}

TEST(Eigenvalues, ClampsTinyNegatives) {
  Covariance3 d;
  d.m = {{{1, 0, 0}, {0, -5e-11, 0}, {0, 0, 0}}};
  const auto e = eigenvalues_sym3(d);
  EXPECT_EQ(e.l3, 0.0);
  EXPECT_GE(e.l2, 0.0);
}

TEST(Eigenvalues, MatchesIterativeOracleOnRandomPsd) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::Matrix3d a;
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = g(rng);
    const Eigen::Matrix3d m = a * a.transpose();
    Covariance3 s;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s.m[r][c] = m(r, c);
    const auto e = eigenvalues_sym3(s);
    const auto ref = oracle::eigenvalues_desc(m);
    // Relative to the spectral scale so near-zero eigenvalues are judged fairly.
    EXPECT_NEAR(e.l1, ref[0], 1e-9 * ref[0]);
    EXPECT_NEAR(e.l2, ref[1], 1e-9 * ref[0]);
    EXPECT_NEAR(e.l3, std::max(ref[2], 0.0), 1e-9 * ref[0]);
    EXPECT_GE(e.l1, e.l2);
    EXPECT_GE(e.l2, e.l3);
  }
}

TEST(Linearity, Examples) {
  EXPECT_DOUBLE_EQ(linearity({5, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(linearity({4, 4, 0}), 0.0);
  EXPECT_DOUBLE_EQ(linearity({2, 0.5, 0.1}), 0.75);
  EXPECT_DOUBLE_EQ(linearity({0, 0, 0}), 0.0);
}

LinearityField field_of(const std::vector<Point3>& pts, double r = kDefaultRadius) {
  const LabeledCloud c(pts);
  return compute_linearity_field(c, build_index(c), r);
}

TEST(LinearityField, CollinearPointsAreLinear) {
  std::vector<Point3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({i * 0.01, 0, 0});
  const auto f = field_of(pts);
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) EXPECT_GE(f.values[i], 0.999) << i;
  EXPECT_DOUBLE_EQ(f.radius_m, 0.15);
}

TEST(LinearityField, FlatDiscCenterIsIsotropic) {
  const auto pts = oracle::grid_disc(0.5, 0.01);
  std::size_t center = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i] == Point3{0, 0, 0}) center = i;
  }
  // Exact PCA of the enumerated neighborhood fixes the expectation.
  const double expected = oracle::naive_linearity(
      std::vector<Point3>(pts.begin(), pts.end()), 0.15)[center];
  EXPECT_LE(expected, 0.05);
  const auto f = field_of(pts);
  EXPECT_NEAR(f.values[center], expected, 1e-9);
  EXPECT_LE(f.values[center], 0.05);
}

TEST(LinearityField, IsolatedAndSparsePointsAreZero) {
  const auto f = field_of({{0, 0, 0}, {5, 5, 5}, {5.1, 5, 5}, {10, 0, 0}});
  for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(LinearityField, RejectsMismatchedIndexAndBadRadius) {
  const LabeledCloud a({{0, 0, 0}, {1, 0, 0}});
  const LabeledCloud b({{0, 0, 0}});
  EXPECT_THROW(compute_linearity_field(a, build_index(b)), ContractError);
  EXPECT_THROW(compute_linearity_field(a, build_index(a), 0.0), ContractError);
}

TEST(LinearityField, RangeOverRandomClouds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pts = oracle::random_points(300 + seed * 50, seed, 0.6);
    for (double v : field_of(pts).values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(LinearityField, RigidMotionInvariance) {
  const auto pts = oracle::random_points(800, 4, 0.7);
  const auto base = field_of(pts);
  const Eigen::Matrix3d rot =
      (Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized())).toRotationMatrix();
  std::vector<Point3> moved;
  for (const auto& p : pts) {
    const Eigen::Vector3d v = rot * Eigen::Vector3d(p.x, p.y, p.z) + Eigen::Vector3d(12.5, -3, 100);
    moved.push_back({v.x(), v.y(), v.z()});
  }
  // Neighborhood membership must not flip at the boundary for the comparison
  // to be meaningful; random radii keep this away from exact ties.
  const auto f = field_of(moved);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(f.values[i], base.values[i], 1e-9);
}

TEST(LinearityField, PermutationEquivariance) {
  const auto pts = oracle::random_points(600, 8, 0.6);
  const auto base = field_of(pts);
  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  std::vector<Point3> shuffled;
  for (auto i : perm) shuffled.push_back(pts[i]);
  const auto f = field_of(shuffled);
  for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_NEAR(f.values[j], base.values[perm[j]], 1e-12);
}

TEST(LinearityField, ThinCylinderMoreLinearThanThick) {
  auto mean_interior = [](double radius) {
    const auto pts = oracle::grid_cylinder(radius, 2.0, 0.01);
    const auto f = field_of(pts);
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].z < 0.3 || pts[i].z > 1.7) continue;
      s += f.values[i];
      ++n;
    }
    return s / static_cast<double>(n);
  };
  const double branch = mean_interior(0.05);
  const double trunk = mean_interior(0.30);
  EXPECT_GT(branch, trunk);
}

TEST(LinearityField, EqualsNaiveOracle) {
  const auto pts = oracle::random_points(2000, 21, 0.8);
  const auto f = field_of(pts);
  const auto ref = oracle::naive_linearity(pts, 0.15);
  for (std::size_t i = 0; i < pts.size(); ++i) ASSERT_NEAR(f.values[i], ref[i], 1e-9) << i;
}

}  // namespace
}  // namespace leafwood
