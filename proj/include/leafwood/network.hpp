#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "leafwood/cloud.hpp"
#include "leafwood/sampling.hpp"

namespace leafwood {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Configuration

/// One grouping scale of a set-abstraction level: ball radius (normalized
/// units), group size, and the widths of its shared point-wise layers.
struct ScaleConfig {
  double radius = 0.1;
  std::size_t max_group = 16;
  std::vector<std::size_t> widths;
};

struct LevelConfig {
  std::size_t num_centroids = 0;
  std::vector<ScaleConfig> scales;
};

/// Two multi-scale set-abstraction levels, two feature-propagation stages
/// and a per-point linear head over (x, y, z, linearity) inputs.
struct ModelConfig {
  LevelConfig level1{2048, {{0.1, 16, {16, 32}}, {0.2, 32, {16, 32}}}};
  LevelConfig level2{512, {{0.2, 16, {64, 64}}, {0.4, 32, {64, 64}}}};
  std::vector<std::size_t> fp2_widths{64};
  std::vector<std::size_t> fp1_widths{32};
  std::size_t num_classes = 2;
  /// Points per forward pass; larger chunks are processed as random blocks.
  std::size_t block_points = 8192;
  /// When false the linearity input channel is fed as zeros everywhere.
  bool use_linearity = true;
  SamplingStrategy sampling = SamplingStrategy::random;
  std::uint64_t seed = 7;

  static constexpr std::size_t kInputChannels = 4;

  /// Desk-scale preset: 2048-point blocks, 256/64 centroids.
  static ModelConfig toy();
  /// Tiny preset for finite-difference checks: 16 points, 4 centroids.
  static ModelConfig micro();

  /// Same network, centroid counts clipped to what `points` can supply.
  ModelConfig fitted_to(std::size_t points) const;

  /// Throws ContractError when radii are not positive and ascending within a
  /// level, widths are zero, or counts are inconsistent.
  void validate() const;
};

std::string to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

enum class Optimizer { adam, sgd };

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 60;
  double decay_rate = 0.5;
  std::size_t decay_step = 20;
  /// Blocks per gradient step.
  std::size_t batch = 1;
  std::uint64_t seed = 11;
  Optimizer optimizer = Optimizer::adam;
  /// Loss weight of leaf (index 0) and wood (index 1).
  std::vector<double> class_weights{1.0, 1.0};

  void validate() const;
};

// ---------------------------------------------------------------------------
// Parameters

struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Flat weight/bias arrays in a fixed order: level-1 scales, level-2 scales,
/// fp2, fp1, head. Dense layers are `<prefix>.w` (in x out) then `<prefix>.b`
/// (1 x out).
struct ModelParams {
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// He-normal weights, zero biases, deterministic per seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Same shapes as `config` with every entry zero.
ModelParams zero_params(const ModelConfig& config);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

/// Binary little-endian file: magic, format version, config JSON, then each
/// tensor's name, shape and raw float64 data. Loading reproduces the params
/// bit for bit.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Building blocks

/// Member indices of `max_group` slots per centroid. Members within `radius`
/// are ordered by (distance, index); when more than `max_group` exist, ranks
/// are taken at an even stride over that order, so the nearest is always
/// first. Short groups are padded with the nearest member.
struct Groups {
  std::size_t max_group = 0;
  std::vector<std::size_t> members;  // centroid-major, max_group per centroid
  std::vector<std::size_t> in_radius;  // distinct members found per centroid

  std::size_t member(std::size_t centroid, std::size_t slot) const {
    return members[centroid * max_group + slot];
  }
};

Groups ball_group(std::span<const std::size_t> centroid_indices, std::span<const Point3> points,
                  double radius, std::size_t max_group);

/// A grouped member re-expressed relative to its centroid; linearity passes
/// through unchanged.
struct GroupedPoint {
  Point3 relative;
  double linearity = 0.0;
};

std::vector<GroupedPoint> grouped_points(const Groups& groups,
                                         std::span<const std::size_t> centroid_indices,
                                         std::span<const Point3> points,
                                         std::span<const double> linearity);

/// Inverse-distance weights over the (up to) three nearest coarse points of
/// every fine point. Weights of each fine point sum to one.
struct Interpolation {
  static constexpr std::size_t kNeighbors = 3;
  std::size_t used = 0;  // min(3, coarse count)
  std::vector<std::size_t> index;  // fine-major, `used` per fine point
  std::vector<double> weight;
};

Interpolation three_nn_interpolation(std::span<const Point3> fine, std::span<const Point3> coarse);

// ---------------------------------------------------------------------------
// Forward / backward

/// Normalized points of one block and their linearity.
struct NetworkInput {
  std::span<const Point3> points;
  std::span<const double> linearity;
};

/// Level-1 centroids index the input points; level-2 centroids index the
/// level-1 centroid list.
struct CentroidChoice {
  std::vector<std::size_t> level1;
  std::vector<std::size_t> level2;
};

/// Draws centroids with the configured strategy; `seed` drives random
/// sampling and is ignored by FPS (which starts at index 0).
CentroidChoice choose_centroids(const ModelConfig& config, std::span<const Point3> points,
                                std::uint64_t seed);

/// Per-point class scores (rows = points, cols = classes).
Matrix forward(const ModelParams& params, const ModelConfig& config, const NetworkInput& input,
               const CentroidChoice& centroids);

/// forward() with centroids drawn from `config.seed`.
Matrix forward(const ModelParams& params, const ModelConfig& config, const NetworkInput& input);

/// Weighted mean softmax cross-entropy: sum_i w[y_i] * -log p_i[y_i] / sum_i w[y_i].
double loss(const Matrix& scores, std::span<const ClassLabel> labels,
            std::span<const double> class_weights = {});

struct LossAndGradient {
  double loss = 0.0;
  ModelParams gradient;  // same layout as the params
};

/// Exact reverse-mode gradient of loss(forward(...)) for fixed centroids.
LossAndGradient backward(const ModelParams& params, const ModelConfig& config,
                         const NetworkInput& input, const CentroidChoice& centroids,
                         std::span<const ClassLabel> labels,
                         std::span<const double> class_weights = {});

/// Argmax per row; an exact tie resolves to leaf.
std::vector<ClassLabel> argmax_labels(const Matrix& scores);

// ---------------------------------------------------------------------------
// Training and inference

struct TrainResult {
  ModelParams params;
  /// Mean block loss of each epoch, measured during that epoch.
  std::vector<double> epoch_losses;
};

/// Splits and normalizes a labeled, featurized cloud into training chunks.
std::vector<LabeledCloud> prepare_training_chunks(const LabeledCloud& cloud,
                                                  std::size_t max_point_num);

/// Mini-batch gradient descent over random point blocks of every chunk
/// (one epoch = every point seen once), with the learning rate multiplied by
/// decay_rate every decay_step epochs. Throws NumericError on a non-finite
/// loss.
TrainResult train(ModelParams params, const ModelConfig& config,
                  std::span<const LabeledCloud> chunks, const TrainConfig& train_config);

/// split -> normalize -> forward per block -> argmax -> integrate. Requires
/// linearity; returns one label per input point in input order.
std::vector<ClassLabel> predict(const ModelParams& params, const ModelConfig& config,
                                const LabeledCloud& cloud, std::size_t max_point_num);

/// Balanced random partition of [0, n) into blocks of about `block_points`.
std::vector<std::vector<std::size_t>> random_blocks(std::size_t n, std::size_t block_points,
                                                    std::uint64_t seed);

}  // namespace leafwood
