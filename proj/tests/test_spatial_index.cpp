#include <gtest/gtest.h>

#include <random>

#include "leafwood/errors.hpp"
#include "leafwood/spatial_index.hpp"
#include "oracles.hpp"

namespace leafwood {
namespace {

std::vector<std::size_t> ids(std::initializer_list<std::size_t> l) { return l; }

TEST(SpatialIndex, SinglePointIncludesItself) {
  const auto index = build_index(LabeledCloud({{1, 2, 3}}));
  EXPECT_EQ(index.radius_query(0, 0.5).member_indices, ids({0}));
}

TEST(SpatialIndex, EmptyCloudRejected) {
  EXPECT_THROW(build_index(LabeledCloud{}), ContractError);
}

TEST(SpatialIndex, CollinearHandChecked) {
  const auto index = build_index(LabeledCloud({{0, 0, 0}, {0.1, 0, 0}, {0.2, 0, 0}, {0.5, 0, 0}}));
  EXPECT_EQ(index.radius_query(0, 0.15).member_indices, ids({0, 1}));
  EXPECT_EQ(index.radius_query(1, 0.15).member_indices, ids({0, 1, 2}));
}

TEST(SpatialIndex, BoundaryIsInclusive) {
  const auto index = build_index(LabeledCloud({{0, 0, 0}, {0.25, 0, 0}, {0, 0.5, 0}}));
  EXPECT_EQ(index.radius_query(0, 0.25).member_indices, ids({0, 1}));
  EXPECT_EQ(index.radius_query(0, 0.5).member_indices, ids({0, 1, 2}));
}

TEST(SpatialIndex, InvalidArguments) {
  const auto index = build_index(LabeledCloud({{0, 0, 0}}));
  EXPECT_THROW(index.radius_query(1, 0.1), ContractError);
  EXPECT_THROW(index.radius_query(0, 0.0), ContractError);
}

TEST(SpatialIndex, MatchesLinearScanOnRandomQueries) {
  const auto pts = oracle::random_points(500, 42);
  const SpatialIndex index(pts);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::uniform_real_distribution<double> rad(0.01, 0.4);
  for (int q = 0; q < 50; ++q) {
    const std::size_t c = pick(rng);
    const double r = rad(rng);
    EXPECT_EQ(index.radius_query(c, r).member_indices, oracle::radius_scan(pts, pts[c], r));
  }
}

TEST(SpatialIndex, DuplicatesAndDegenerateExtents) {
  std::vector<Point3> pts(40, Point3{1, 1, 1});
  for (int i = 0; i < 40; ++i) pts.push_back({static_cast<double>(i) * 0.01, 0, 0});
  const SpatialIndex index(pts, 4);
  for (std::size_t c : {0u, 39u, 40u, 79u}) {
    EXPECT_EQ(index.radius_query(c, 0.05).member_indices,
              oracle::radius_scan(pts, pts[c], 0.05));
  }
}

// Exhaustive property: every point, several radii, several cloud sizes.
TEST(SpatialIndex, ExhaustiveEquivalenceProperty) {
  for (std::size_t n : {1u, 2u, 17u, 300u, 2000u}) {
    const auto pts = oracle::random_points(n, n + 1);
    const SpatialIndex index(pts);
    for (double r : {0.02, 0.1, 0.35, 2.0}) {
      for (std::size_t c = 0; c < n; c += std::max<std::size_t>(1, n / 97)) {
        ASSERT_EQ(index.radius_query(c, r).member_indices, oracle::radius_scan(pts, pts[c], r))
            << "n=" << n << " r=" << r << " c=" << c;
      }
    }
  }
}

TEST(SpatialIndex, LargeCloudSpotCheck) {
  const auto pts = oracle::random_points(100000, 9);
  const SpatialIndex index(pts);
  for (std::size_t c = 0; c < pts.size(); c += 9973) {
    EXPECT_EQ(index.radius_query(c, 0.03).member_indices, oracle::radius_scan(pts, pts[c], 0.03));
  }
}

}  // namespace
}  // namespace leafwood
