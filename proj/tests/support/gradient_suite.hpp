#pragma once

// Central finite-difference checks of every loss and every model forward.
// Shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kf::testing {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

/// ReLU activation pattern of a network at the current inputs/parameters.
using Pattern = std::function<std::vector<bool>()>;

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over the checked
/// coordinates of `x`; `f` must read `x` in place. At most `max_coords`
/// coordinates (chosen at random) are probed; 0 probes all. With `pattern`,
/// a coordinate whose +-h step flips any ReLU is replaced by another one:
/// the function has no derivative between the two evaluation points.
double gradient_error(std::span<double> x, std::span<const double> analytic, const std::function<double()>& f,
                      std::mt19937_64& rng, std::size_t max_coords = 0, double h = kStep,
                      const Pattern& pattern = {});

struct GradientCase {
  std::string name;
  int instances = 0;
  double worst_error = 0.0;
};

/// Runs `instances` random small instances of every case.
std::vector<GradientCase> gradient_suite(std::uint64_t seed, int instances);

}  // namespace kf::testing
