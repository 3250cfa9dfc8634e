#include "leafwood/sampling.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>

#include "leafwood/errors.hpp"

namespace leafwood {

namespace {

void check_k(std::size_t n, std::size_t k) {
  if (k == 0) throw ContractError("sample size k must be at least 1");
  if (k > n) {
    throw ContractError("cannot draw " + std::to_string(k) + " distinct indices from " +
                        std::to_string(n) + " points");
  }
}

}  // namespace

SampleSet random_centroids(std::size_t n, std::size_t k, std::uint64_t seed) {
  check_k(n, k);
  std::mt19937_64 rng(seed);
  // Virtual identity permutation; only displaced slots are stored.
  std::unordered_map<std::size_t, std::size_t> displaced;
  displaced.reserve(2 * k);
  auto at = [&](std::size_t i) {
    auto it = displaced.find(i);
    return it == displaced.end() ? i : it->second;
  };
  SampleSet out{{}, seed, SamplingStrategy::random};
  out.indices.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    const std::size_t j = pick(rng);
    const std::size_t vi = at(i);
    const std::size_t vj = at(j);
    displaced[j] = vi;
    displaced[i] = vj;
    out.indices.push_back(vj);
  }
  return out;
}

SampleSet farthest_point_sampling(std::span<const Point3> points, std::size_t k,
                                  std::size_t start_index) {
  const std::size_t n = points.size();
  check_k(n, k);
  if (start_index >= n) throw ContractError("FPS start index out of range");
  SampleSet out{{}, start_index, SamplingStrategy::fps};
  out.indices.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = start_index;
  for (std::size_t s = 0; s < k; ++s) {
    out.indices.push_back(current);
    min_d2[current] = -1.0;  // selected points never win again
    const Point3 c = points[current];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      const double d = squared_distance(points[i], c);
      if (d < min_d2[i]) min_d2[i] = d;
      if (min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

double SamplingBenchmark::speedup() const noexcept {
  return random.mean_seconds > 0.0 ? fps.mean_seconds / random.mean_seconds
                                   : std::numeric_limits<double>::infinity();
}

SamplingBenchmark benchmark_sampling(std::size_t n, std::size_t k, std::size_t repeats,
                                     std::uint64_t seed) {
  if (repeats < 3) throw ContractError("benchmark needs at least 3 repeats");
  check_k(n, k);
  using clock = std::chrono::steady_clock;
  SamplingBenchmark b{n, k, repeats, {}, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point3> pts(n);
  double rnd_sum = 0, fps_sum = 0;
  double rnd_min = std::numeric_limits<double>::infinity(), fps_min = rnd_min;
  std::size_t sink = 0;
  for (std::size_t r = 0; r < repeats; ++r) {
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    auto t0 = clock::now();
    sink += random_centroids(n, k, seed + r).indices.back();
    auto t1 = clock::now();
    sink += farthest_point_sampling(pts, k, 0).indices.back();
    auto t2 = clock::now();
    const double dr = std::chrono::duration<double>(t1 - t0).count();
    const double df = std::chrono::duration<double>(t2 - t1).count();
    rnd_sum += dr;
    fps_sum += df;
    rnd_min = std::min(rnd_min, dr);
    fps_min = std::min(fps_min, df);
  }
  volatile std::size_t keep = sink;
  (void)keep;
  b.random = {rnd_sum / static_cast<double>(repeats), rnd_min};
  b.fps = {fps_sum / static_cast<double>(repeats), fps_min};
  return b;
}

void write_report(std::ostream& os, const SamplingBenchmark& b) {
  os << "n=" << b.n << '\n'
     << "k=" << b.k << '\n'
     << "repeats=" << b.repeats << '\n'
     << "random_mean_s=" << b.random.mean_seconds << '\n'
     << "random_min_s=" << b.random.min_seconds << '\n'
     << "fps_mean_s=" << b.fps.mean_seconds << '\n'
     << "fps_min_s=" << b.fps.min_seconds << '\n'
     << "random_speedup=" << b.speedup() << '\n';
}

}  // namespace leafwood
