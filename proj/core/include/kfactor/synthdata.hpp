#pragma once

// Procedural latent-factor image datasets (dSprites- and Shapes3D-style).
//
// A dataset is the cartesian grid of its factor values; each grid point is
// rendered once and labeled with one classification task per factor whose
// label is the factor's value index.

#include "kfactor/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kf::synth {

enum class SceneKind { sprites, shapes3d };

std::string to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

struct LatentFactor {
  std::string name;
  std::vector<double> values;

  bool operator==(const LatentFactor&) const = default;
};

/// Declarative description of independent generative factors.
///
/// Recognized factor names:
///   sprites:  shape {0 square, 1 ellipse, 2 heart}, scale, orientation (radians),
///             pos_x, pos_y (both in [0, 1])
///   shapes3d: floor_hue, wall_hue, object_hue (in [0, 1)), scale (in [0, 1]),
///             shape {0 cube, 1 cylinder, 2 sphere, 3 capsule}, orientation (degrees)
/// Factors absent from a spec are held at a fixed default value.
struct LatentFactorSpec {
  SceneKind scene = SceneKind::sprites;
  std::vector<LatentFactor> factors;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 1;

  void validate() const;
  std::size_t num_factors() const noexcept { return factors.size(); }
  std::vector<std::size_t> cardinalities() const;
  std::size_t grid_size() const;
  std::optional<std::size_t> factor_position(const std::string& name) const;

  /// Full dSprites grid: 3 x 6 x 40 x 32 x 32 = 737,280 combinations. The
  /// single-valued colour factor is implied by the white sprite and omitted.
  static LatentFactorSpec dsprites();
  /// Full Shapes3D grid: 10 x 10 x 10 x 8 x 4 x 15 = 480,000 combinations.
  static LatentFactorSpec shapes3d();

  bool operator==(const LatentFactorSpec&) const = default;
};

using LatentIndex = std::vector<std::size_t>;

struct LabeledSample {
  Tensor image;  // channels x height x width, values in [0, 1]
  LatentIndex latent_index;
  std::vector<int> task_labels;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::uint64_t seed = 0;
  double ratio = 0.7;
};

/// Every grid combination exactly once (last factor varies fastest), or a
/// seeded uniform subset of `subsample` combinations in grid order.
std::vector<LatentIndex> build_latent_grid(const LatentFactorSpec& spec,
                                           std::optional<std::size_t> subsample = std::nullopt,
                                           std::uint64_t seed = 0);

/// Mixed-radix rank of an index tuple in grid order.
std::size_t linear_index(const LatentFactorSpec& spec, const LatentIndex& index);
LatentIndex unravel_index(const LatentFactorSpec& spec, std::size_t linear);

void validate_index(const LatentFactorSpec& spec, const LatentIndex& index);

std::vector<int> derive_task_labels(const LatentIndex& index, const LatentFactorSpec& spec);

/// Pure function of (spec, index).
LabeledSample render_sample(const LatentFactorSpec& spec, const LatentIndex& index);

std::vector<LabeledSample> render_all(const LatentFactorSpec& spec, const std::vector<LatentIndex>& indices);

/// |train| = round(ratio * N); membership depends only on (N, ratio, seed).
DatasetSplit split_dataset(std::vector<LabeledSample> samples, double ratio, std::uint64_t seed);

/// The seeded permutation behind split_dataset: first round(ratio*N) entries are train.
std::vector<std::size_t> split_permutation(std::size_t n, double ratio, std::uint64_t seed,
                                           std::size_t* train_count = nullptr);

}  // namespace kf::synth
