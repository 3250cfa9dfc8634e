#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "leafwood/cloud.hpp"

namespace leafwood {

enum class SamplingStrategy { random, fps };

/// Selected centroid indices. For fps, `seed` holds the start index.
struct SampleSet {
  std::vector<std::size_t> indices;
  std::uint64_t seed = 0;
  SamplingStrategy strategy = SamplingStrategy::random;
};

/// k distinct indices of [0, n) drawn uniformly without replacement in O(k)
/// time and memory (sparse partial Fisher-Yates). Deterministic per seed.
SampleSet random_centroids(std::size_t n, std::size_t k, std::uint64_t seed);

/// Greedy max-min selection starting at `start_index`; ties go to the
/// lowest index. O(n k).
SampleSet farthest_point_sampling(std::span<const Point3> points, std::size_t k,
                                  std::size_t start_index = 0);

struct StrategyTiming {
  double mean_seconds = 0.0;
  double min_seconds = 0.0;
};

struct SamplingBenchmark {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t repeats = 0;
  StrategyTiming random;
  StrategyTiming fps;

  /// fps mean time / random mean time, i.e. how many times faster random is.
  double speedup() const noexcept;
};

/// Times both strategies on `repeats` uniform random clouds of n points.
SamplingBenchmark benchmark_sampling(std::size_t n, std::size_t k, std::size_t repeats,
                                     std::uint64_t seed = 0);

/// key=value lines.
void write_report(std::ostream& os, const SamplingBenchmark& b);

}  // namespace leafwood
