#pragma once

#include <cstddef>
#include <cstdint>

#include "leafwood/cloud.hpp"

namespace leafwood {

/// Parameters of a synthetic tree: a vertical trunk cylinder at the origin,
/// tilted branch cylinders attached to its upper part, and isotropic Gaussian
/// leaf clusters around the branch tips.
struct SynthTreeSpec {
  double trunk_radius_m = 0.30;
  double trunk_height_m = 4.0;
  double branch_radius_m = 0.05;
  std::size_t branch_count = 12;
  double branch_length_m = 1.2;
  std::size_t leaf_cluster_count = 12;
  std::size_t leaf_points_per_cluster = 2500;
  double leaf_cluster_sigma_m = 0.2;
  double surface_sample_pitch_m = 0.03;
  std::uint64_t seed = 1;
};

/// Throws ContractError for non-positive lengths or a pitch that is not
/// smaller than both radii.
void validate(const SynthTreeSpec& spec);

/// Counts of each construction element in a generated tree.
struct SynthTreeCounts {
  std::size_t trunk = 0;
  std::size_t branch = 0;
  std::size_t leaf = 0;
};

/// Trunk and branch surfaces are sampled on regular grids; only leaf points
/// are random. Output order: trunk, branches, leaves. Bit-identical per seed.
LabeledCloud generate_tree(const SynthTreeSpec& spec, SynthTreeCounts* counts = nullptr);

}  // namespace leafwood
