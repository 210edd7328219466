#include "kfactor/synthdata.hpp"

#include "kfactor/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

namespace kf::synth {
namespace {

constexpr int kSuperSamples = 4;  // per axis, 16 coverage samples per pixel

const std::vector<std::string>& known_factor_names(SceneKind kind) {
  static const std::vector<std::string> sprites{"shape", "scale", "orientation", "pos_x", "pos_y"};
  static const std::vector<std::string> shapes3d{"floor_hue", "wall_hue", "object_hue",
                                                 "scale",     "shape",    "orientation"};
  return kind == SceneKind::sprites ? sprites : shapes3d;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

std::vector<double> periodic_grid(double period, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = period * static_cast<double>(i) / static_cast<double>(n);
  return v;
}

// Factor values resolved for one grid point, with scene defaults for absent factors.
struct SceneParams {
  double shape = 0.0;
  double scale = 0.75;
  double orientation = 0.0;
  double pos_x = 0.5;
  double pos_y = 0.5;
  double floor_hue = 0.0;
  double wall_hue = 0.3;
  double object_hue = 0.6;
};

SceneParams resolve(const LatentFactorSpec& spec, const LatentIndex& index) {
  SceneParams p;
  if (spec.scene == SceneKind::shapes3d) p.scale = 0.5;
  for (std::size_t f = 0; f < spec.factors.size(); ++f) {
    const auto& name = spec.factors[f].name;
    const double v = spec.factors[f].values[index[f]];
    if (name == "shape") p.shape = v;
    else if (name == "scale") p.scale = v;
    else if (name == "orientation") p.orientation = v;
    else if (name == "pos_x") p.pos_x = v;
    else if (name == "pos_y") p.pos_y = v;
    else if (name == "floor_hue") p.floor_hue = v;
    else if (name == "wall_hue") p.wall_hue = v;
    else if (name == "object_hue") p.object_hue = v;
  }
  return p;
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Shape membership in the sprite's local frame (unit half-extent).
bool inside_sprite(int shape, double x, double y) {
  switch (shape) {
    case 0: return std::abs(x) <= 0.8 && std::abs(y) <= 0.8;
    case 1: return x * x + (y / 0.5) * (y / 0.5) <= 1.0;
    default: {
      const double hx = 1.2 * x, hy = 1.2 * y + 0.1;
      const double a = hx * hx + hy * hy - 1.0;
      return a * a * a - hx * hx * hy * hy * hy <= 0.0;
    }
  }
}

bool inside_object(int shape, double x, double y) {
  switch (shape) {
    case 0: return std::abs(x) <= 0.8 && std::abs(y) <= 0.8;
    case 1: return std::abs(x) <= 0.55 && std::abs(y) <= 0.9;
    case 2: return x * x + y * y <= 0.85 * 0.85;
    default: {
      const double cy = std::clamp(y, -0.45, 0.45);
      return x * x + (y - cy) * (y - cy) <= 0.45 * 0.45;
    }
  }
}

void render_sprites(const LatentFactorSpec& spec, const SceneParams& p, Tensor& image) {
  constexpr double kMargin = 0.2;
  constexpr double kBaseRadius = 0.16;
  const double cx = kMargin + p.pos_x * (1.0 - 2.0 * kMargin);
  const double cy = kMargin + p.pos_y * (1.0 - 2.0 * kMargin);
  const double radius = kBaseRadius * p.scale;
  const double c = std::cos(p.orientation), s = std::sin(p.orientation);
  const int shape = static_cast<int>(std::lround(p.shape));
  const std::size_t h = spec.height, w = spec.width;
  for (std::size_t row = 0; row < h; ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      int hits = 0;
      for (int sy = 0; sy < kSuperSamples; ++sy) {
        for (int sx = 0; sx < kSuperSamples; ++sx) {
          const double u = (static_cast<double>(col) + (sx + 0.5) / kSuperSamples) / static_cast<double>(w);
          const double v = (static_cast<double>(row) + (sy + 0.5) / kSuperSamples) / static_cast<double>(h);
          const double dx = (u - cx) / radius, dy = (cy - v) / radius;
          hits += inside_sprite(shape, c * dx + s * dy, -s * dx + c * dy) ? 1 : 0;
        }
      }
      const double coverage = static_cast<double>(hits) / (kSuperSamples * kSuperSamples);
      for (std::size_t ch = 0; ch < spec.channels; ++ch) image[(ch * h + row) * w + col] = coverage;
    }
  }
}

void render_shapes3d(const LatentFactorSpec& spec, const SceneParams& p, Tensor& image) {
  const auto floor_rgb = hsv_to_rgb(p.floor_hue, 0.6, 0.7);
  const auto wall_rgb = hsv_to_rgb(p.wall_hue, 0.6, 0.9);
  const auto object_rgb = hsv_to_rgb(p.object_hue, 0.9, 1.0);
  const double theta = p.orientation * std::numbers::pi / 180.0;
  const double slope = 0.5 * std::tan(theta);
  constexpr double kHorizon = 0.62;
  const double radius = 0.12 + 0.12 * p.scale;
  const double ox = 0.5, oy = kHorizon;
  const double c = std::cos(theta), s = std::sin(theta);
  const int shape = static_cast<int>(std::lround(p.shape));
  const std::size_t h = spec.height, w = spec.width;
  for (std::size_t row = 0; row < h; ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSuperSamples; ++sy) {
        for (int sx = 0; sx < kSuperSamples; ++sx) {
          const double u = (static_cast<double>(col) + (sx + 0.5) / kSuperSamples) / static_cast<double>(w);
          const double v = (static_cast<double>(row) + (sy + 0.5) / kSuperSamples) / static_cast<double>(h);
          const double dx = (u - ox) / radius, dy = (oy - v) / radius;
          const std::array<double, 3>* rgb = nullptr;
          if (inside_object(shape, c * dx + s * dy, -s * dx + c * dy)) rgb = &object_rgb;
          else if (v < kHorizon + slope * (u - 0.5)) rgb = &wall_rgb;
          else rgb = &floor_rgb;
          for (int k = 0; k < 3; ++k) acc[k] += (*rgb)[k];
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        image[(ch * h + row) * w + col] = acc[ch] / (kSuperSamples * kSuperSamples);
      }
    }
  }
}

}  // namespace

std::string to_string(SceneKind kind) { return kind == SceneKind::sprites ? "sprites" : "shapes3d"; }

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "sprites") return SceneKind::sprites;
  if (name == "shapes3d") return SceneKind::shapes3d;
  throw InvalidArgument("unknown scene kind '" + name + "'");
}

void LatentFactorSpec::validate() const {
  if (factors.empty()) throw InvalidArgument("latent spec: no factors");
  if (height < 8 || width < 8) throw InvalidArgument("latent spec: image must be at least 8x8");
  if (channels != 1 && channels != 3) throw InvalidArgument("latent spec: channels must be 1 or 3");
  if (scene == SceneKind::shapes3d && channels != 3) {
    throw InvalidArgument("latent spec: shapes3d scenes are colour images (channels = 3)");
  }
  const auto& known = known_factor_names(scene);
  std::set<std::string> seen;
  for (const auto& f : factors) {
    if (std::find(known.begin(), known.end(), f.name) == known.end()) {
      throw InvalidArgument("latent spec: factor '" + f.name + "' is not defined for " + to_string(scene) +
                            " scenes");
    }
    if (!seen.insert(f.name).second) throw InvalidArgument("latent spec: duplicate factor '" + f.name + "'");
    if (f.values.size() < 2) throw InvalidArgument("latent spec: factor '" + f.name + "' needs >= 2 values");
    if (f.name == "shape") {
      const int max_shape = scene == SceneKind::sprites ? 2 : 3;
      for (double v : f.values) {
        if (v != std::round(v) || v < 0 || v > max_shape) {
          throw InvalidArgument("latent spec: shape values must be category ids in [0, " +
                                std::to_string(max_shape) + "]");
        }
      }
    }
  }
}

std::vector<std::size_t> LatentFactorSpec::cardinalities() const {
  std::vector<std::size_t> out;
  out.reserve(factors.size());
  for (const auto& f : factors) out.push_back(f.values.size());
  return out;
}

std::size_t LatentFactorSpec::grid_size() const {
  std::size_t n = 1;
  for (const auto& f : factors) n *= f.values.size();
  return n;
}

std::optional<std::size_t> LatentFactorSpec::factor_position(const std::string& name) const {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].name == name) return i;
  }
  return std::nullopt;
}

LatentFactorSpec LatentFactorSpec::dsprites() {
  LatentFactorSpec spec;
  spec.scene = SceneKind::sprites;
  spec.factors = {
      {"shape", {0, 1, 2}},
      {"scale", linspace(0.5, 1.0, 6)},
      {"orientation", periodic_grid(2.0 * std::numbers::pi, 40)},
      {"pos_x", linspace(0.0, 1.0, 32)},
      {"pos_y", linspace(0.0, 1.0, 32)},
  };
  return spec;
}

LatentFactorSpec LatentFactorSpec::shapes3d() {
  LatentFactorSpec spec;
  spec.scene = SceneKind::shapes3d;
  spec.channels = 3;
  spec.factors = {
      {"floor_hue", periodic_grid(1.0, 10)}, {"wall_hue", periodic_grid(1.0, 10)},
      {"object_hue", periodic_grid(1.0, 10)}, {"scale", linspace(0.0, 1.0, 8)},
      {"shape", {0, 1, 2, 3}},                {"orientation", linspace(-30.0, 30.0, 15)},
  };
  return spec;
}

std::size_t linear_index(const LatentFactorSpec& spec, const LatentIndex& index) {
  validate_index(spec, index);
  std::size_t linear = 0;
  for (std::size_t f = 0; f < index.size(); ++f) linear = linear * spec.factors[f].values.size() + index[f];
  return linear;
}

LatentIndex unravel_index(const LatentFactorSpec& spec, std::size_t linear) {
  if (linear >= spec.grid_size()) throw InvalidArgument("latent grid: linear index out of range");
  LatentIndex index(spec.factors.size());
  for (std::size_t f = spec.factors.size(); f-- > 0;) {
    const std::size_t card = spec.factors[f].values.size();
    index[f] = linear % card;
    linear /= card;
  }
  return index;
}

void validate_index(const LatentFactorSpec& spec, const LatentIndex& index) {
  if (index.size() != spec.factors.size()) {
    throw InvalidArgument("latent index has " + std::to_string(index.size()) + " entries, spec has " +
                          std::to_string(spec.factors.size()) + " factors");
  }
  for (std::size_t f = 0; f < index.size(); ++f) {
    if (index[f] >= spec.factors[f].values.size()) {
      throw InvalidArgument("latent index " + std::to_string(index[f]) + " out of range for factor '" +
                            spec.factors[f].name + "'");
    }
  }
}

std::vector<LatentIndex> build_latent_grid(const LatentFactorSpec& spec, std::optional<std::size_t> subsample,
                                           std::uint64_t seed) {
  spec.validate();
  const std::size_t total = spec.grid_size();
  std::vector<std::size_t> chosen;
  if (subsample) {
    if (*subsample > total) {
      throw InvalidArgument("subsample of " + std::to_string(*subsample) + " exceeds grid size " +
                            std::to_string(total));
    }
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), std::size_t{0});
    chosen.reserve(*subsample);
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), *subsample, rng);
  } else {
    chosen.resize(total);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  }
  std::vector<LatentIndex> out;
  out.reserve(chosen.size());
  for (std::size_t linear : chosen) out.push_back(unravel_index(spec, linear));
  return out;
}

std::vector<int> derive_task_labels(const LatentIndex& index, const LatentFactorSpec& spec) {
  validate_index(spec, index);
  return std::vector<int>(index.begin(), index.end());
}

LabeledSample render_sample(const LatentFactorSpec& spec, const LatentIndex& index) {
  spec.validate();
  validate_index(spec, index);
  LabeledSample sample;
  sample.image = Tensor({spec.channels, spec.height, spec.width});
  const SceneParams params = resolve(spec, index);
  if (spec.scene == SceneKind::sprites) render_sprites(spec, params, sample.image);
  else render_shapes3d(spec, params, sample.image);
  sample.latent_index = index;
  sample.task_labels = derive_task_labels(index, spec);
  return sample;
}

std::vector<LabeledSample> render_all(const LatentFactorSpec& spec, const std::vector<LatentIndex>& indices) {
  std::vector<LabeledSample> out;
  out.reserve(indices.size());
  for (const auto& idx : indices) out.push_back(render_sample(spec, idx));
  return out;
}

std::vector<std::size_t> split_permutation(std::size_t n, double ratio, std::uint64_t seed,
                                           std::size_t* train_count) {
  if (n == 0) throw InvalidArgument("split: empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split: ratio must lie in (0, 1)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  if (train_count) *train_count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  return perm;
}

DatasetSplit split_dataset(std::vector<LabeledSample> samples, double ratio, std::uint64_t seed) {
  std::size_t n_train = 0;
  auto perm = split_permutation(samples.size(), ratio, seed, &n_train);
  std::vector<char> in_train(samples.size(), 0);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = 1;
  DatasetSplit split;
  split.seed = seed;
  split.ratio = ratio;
  split.train.reserve(n_train);
  split.test.reserve(samples.size() - n_train);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (in_train[i] ? split.train : split.test).push_back(std::move(samples[i]));
  }
  return split;
}

}  // namespace kf::synth
