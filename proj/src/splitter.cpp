#include "leafwood/splitter.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <string>

#include "leafwood/atomic_file.hpp"
#include "leafwood/errors.hpp"

namespace leafwood {

SplitPlan plan_split(std::size_t total_points, std::size_t max_point_num) {
  if (total_points == 0) throw ContractError("cannot plan a split of zero points");
  if (max_point_num == 0) throw ContractError("max_point_num must be at least 1");
  SplitPlan plan{total_points, max_point_num, {}};
  const std::size_t chunks = (total_points + max_point_num - 1) / max_point_num;
  const std::size_t base = total_points / chunks;
  const std::size_t extra = total_points % chunks;
  plan.chunk_sizes.assign(chunks, base);
  for (std::size_t k = 0; k < extra; ++k) ++plan.chunk_sizes[k];
  return plan;
}

namespace {

double coord(const Point3& p, int axis) {
  return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}

struct Splitter {
  std::span<const Point3> pts;
  std::span<const std::size_t> sizes;
  std::vector<std::vector<std::size_t>>& out;
  std::vector<SplitRecord>* records;

  // Assigns `idx` to chunks [first, last) whose target sizes sum to idx.size().
  void run(std::vector<std::size_t> idx, std::size_t first, std::size_t last) {
    if (last - first == 1) {
      std::sort(idx.begin(), idx.end());
      out[first] = std::move(idx);
      return;
    }
    std::array<double, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) lo[a] = hi[a] = coord(pts[idx.front()], a);
    for (std::size_t i : idx) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], coord(pts[i], a));
        hi[a] = std::max(hi[a], coord(pts[i], a));
      }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    }
    const std::size_t mid_chunk = first + (last - first + 1) / 2;
    const std::size_t left_count = std::accumulate(
        sizes.begin() + static_cast<std::ptrdiff_t>(first),
        sizes.begin() + static_cast<std::ptrdiff_t>(mid_chunk), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
      const double ca = coord(pts[a], axis);
      const double cb = coord(pts[b], axis);
      return ca < cb || (ca == cb && a < b);
    };
    auto nth = idx.begin() + static_cast<std::ptrdiff_t>(left_count);
    std::nth_element(idx.begin(), nth, idx.end(), less);
    if (records) {
      records->push_back({axis, coord(pts[*nth], axis), first, mid_chunk, last});
    }
    std::vector<std::size_t> right(nth, idx.end());
    idx.erase(nth, idx.end());
    run(std::move(idx), first, mid_chunk);
    run(std::move(right), mid_chunk, last);
  }
};

}  // namespace

std::vector<Chunk> split(const LabeledCloud& cloud, const SplitPlan& plan,
                         std::vector<SplitRecord>* records) {
  if (plan.total_points != cloud.size()) {
    throw ContractError("split plan is for " + std::to_string(plan.total_points) +
                        " points but the cloud has " + std::to_string(cloud.size()));
  }
  const std::size_t planned =
      std::accumulate(plan.chunk_sizes.begin(), plan.chunk_sizes.end(), std::size_t{0});
  if (planned != cloud.size() || plan.chunk_sizes.empty()) {
    throw ContractError("split plan chunk sizes do not sum to the cloud size");
  }
  std::vector<std::vector<std::size_t>> lists(plan.num_chunks());
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (records) records->clear();
  Splitter{cloud.points(), plan.chunk_sizes, lists, records}.run(std::move(all), 0,
                                                                 plan.num_chunks());
  std::vector<Chunk> chunks;
  chunks.reserve(lists.size());
  for (auto& list : lists) {
    LabeledCloud sub = cloud.subset(list);
    chunks.push_back({std::move(sub), std::move(list)});
  }
  return chunks;
}

std::pair<LabeledCloud, ChunkTransform> normalize_chunk(const LabeledCloud& chunk) {
  if (chunk.empty()) throw ContractError("cannot normalize an empty chunk");
  const auto pts = chunk.points();
  Point3 sum;
  for (const auto& p : pts) sum += p;
  ChunkTransform t{sum / static_cast<double>(pts.size()), 1.0};
  double max_d = 0.0;
  for (const auto& p : pts) max_d = std::max(max_d, distance(p, t.translation));
  if (max_d > 0.0) t.scale = max_d;

  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  std::optional<std::vector<ClassLabel>> labels;
  std::optional<std::vector<double>> lin;
  if (chunk.has_labels()) labels.emplace(chunk.labels().begin(), chunk.labels().end());
  if (chunk.has_linearity()) lin.emplace(chunk.linearity().begin(), chunk.linearity().end());
  return {LabeledCloud(std::move(out), std::move(labels), std::move(lin)), t};
}

LabeledCloud denormalize(const LabeledCloud& chunk, const ChunkTransform& t) {
  if (!(t.scale > 0.0)) throw ContractError("chunk transform scale must be positive");
  std::vector<Point3> out;
  out.reserve(chunk.size());
  for (const auto& p : chunk.points()) out.push_back(t.invert(p));
  std::optional<std::vector<ClassLabel>> labels;
  std::optional<std::vector<double>> lin;
  if (chunk.has_labels()) labels.emplace(chunk.labels().begin(), chunk.labels().end());
  if (chunk.has_linearity()) lin.emplace(chunk.linearity().begin(), chunk.linearity().end());
  return LabeledCloud(std::move(out), std::move(labels), std::move(lin));
}

LabeledCloud integrate(std::span<const Chunk> chunks, std::size_t total) {
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(total, kUnset);
  bool all_linearity = !chunks.empty();
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const Chunk& ch = chunks[c];
    if (ch.original_indices.size() != ch.cloud.size()) {
      throw ContractError("chunk " + std::to_string(c) + " index list length differs from its size");
    }
    if (!ch.cloud.has_labels()) {
      throw ContractError("chunk " + std::to_string(c) + " carries no predicted labels");
    }
    all_linearity = all_linearity && ch.cloud.has_linearity();
    for (std::size_t i : ch.original_indices) {
      if (i >= total) {
        throw ContractError("original index " + std::to_string(i) + " out of range");
      }
      if (owner[i] != kUnset) {
        throw ContractError("original index " + std::to_string(i) + " appears in chunks " +
                            std::to_string(owner[i]) + " and " + std::to_string(c));
      }
      owner[i] = c;
    }
  }
  for (std::size_t i = 0; i < total; ++i) {
    if (owner[i] == kUnset) {
      throw ContractError("original index " + std::to_string(i) + " is missing from every chunk");
    }
  }

  std::vector<Point3> pts(total);
  std::vector<ClassLabel> labels(total);
  std::vector<double> lin(all_linearity ? total : 0);
  for (const Chunk& ch : chunks) {
    const auto cp = ch.cloud.points();
    const auto cl = ch.cloud.labels();
    for (std::size_t j = 0; j < ch.original_indices.size(); ++j) {
      const std::size_t i = ch.original_indices[j];
      pts[i] = cp[j];
      labels[i] = cl[j];
      if (all_linearity) lin[i] = ch.cloud.linearity()[j];
    }
  }
  std::optional<std::vector<double>> out_lin;
  if (all_linearity) out_lin = std::move(lin);
  return LabeledCloud(std::move(pts), std::move(labels), std::move(out_lin));
}

std::vector<std::filesystem::path> save_chunks(std::span<const Chunk> chunks,
                                               const std::filesystem::path& dir,
                                               const std::string& stem) {
  std::vector<std::filesystem::path> paths;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    const std::string base = stem + ".chunk" + std::to_string(k);
    auto xyz = dir / (base + ".xyz");
    save_xyz(chunks[k].cloud, xyz);
    write_atomically(dir / (base + ".idx"), [&](std::ofstream& out) {
      for (std::size_t i : chunks[k].original_indices) out << i << '\n';
    });
    paths.push_back(std::move(xyz));
  }
  return paths;
}

Chunk load_chunk(const std::filesystem::path& xyz_path) {
  Chunk ch{load_xyz(xyz_path), {}};
  auto idx_path = xyz_path;
  idx_path.replace_extension(".idx");
  std::ifstream in(idx_path);
  if (!in) throw IoError("cannot open index map " + idx_path.string());
  std::size_t i = 0;
  while (in >> i) ch.original_indices.push_back(i);
  if (!in.eof()) throw FormatError(idx_path.string() + ": malformed index map");
  if (ch.original_indices.size() != ch.cloud.size()) {
    throw FormatError(idx_path.string() + ": index count differs from chunk size");
  }
  return ch;
}

}  // namespace leafwood
