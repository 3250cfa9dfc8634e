#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "leafwood/cloud.hpp"

namespace leafwood {

inline constexpr std::size_t kDefaultMaxPointNum = 100'000;

/// Balanced chunk sizes for a cloud of `total_points`.
///
/// num_chunks = ceil(total / max_point_num); the first total % num_chunks
/// chunks get one extra point, so sizes differ by at most one.
struct SplitPlan {
  std::size_t total_points = 0;
  std::size_t max_point_num = kDefaultMaxPointNum;
  std::vector<std::size_t> chunk_sizes;

  std::size_t num_chunks() const noexcept { return chunk_sizes.size(); }
};

SplitPlan plan_split(std::size_t total_points, std::size_t max_point_num = kDefaultMaxPointNum);

/// A chunk and the original cloud index of each of its points (ascending).
struct Chunk {
  LabeledCloud cloud;
  std::vector<std::size_t> original_indices;
};

/// One median cut of the recursive split: chunks [first_left, first_right)
/// lie at or below `threshold` on `axis`, chunks [first_right, end_chunk)
/// at or above it.
struct SplitRecord {
  int axis = 0;
  double threshold = 0.0;
  std::size_t first_left = 0;
  std::size_t first_right = 0;
  std::size_t end_chunk = 0;
};

/// Recursive median split along the widest bounding-box axis. Labels and
/// linearity travel with their points. When `records` is given it receives
/// every cut, in construction order.
std::vector<Chunk> split(const LabeledCloud& cloud, const SplitPlan& plan,
                         std::vector<SplitRecord>* records = nullptr);

/// p' = (p - translation) / scale.
struct ChunkTransform {
  Point3 translation;
  double scale = 1.0;

  Point3 apply(const Point3& p) const noexcept { return (p - translation) / scale; }
  Point3 invert(const Point3& p) const noexcept { return p * scale + translation; }
};

/// Centers on the centroid and scales into the closed unit ball. A chunk
/// whose points all coincide gets scale 1.
std::pair<LabeledCloud, ChunkTransform> normalize_chunk(const LabeledCloud& chunk);

LabeledCloud denormalize(const LabeledCloud& chunk, const ChunkTransform& t);

/// Merges chunks back into original order. Every chunk must carry labels and
/// the index lists must partition [0, total); a missing or duplicated index
/// throws ContractError naming it. Linearity is merged when every chunk has it.
LabeledCloud integrate(std::span<const Chunk> chunks, std::size_t total);

/// Writes `<dir>/<stem>.chunk<k>.xyz` and `<dir>/<stem>.chunk<k>.idx` (one
/// original index per line) for every chunk. Returns the .xyz paths.
std::vector<std::filesystem::path> save_chunks(std::span<const Chunk> chunks,
                                               const std::filesystem::path& dir,
                                               const std::string& stem);

/// Reads one chunk written by save_chunks, given its .xyz path.
Chunk load_chunk(const std::filesystem::path& xyz_path);

}  // namespace leafwood
