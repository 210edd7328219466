#pragma once

#include "kfactor/assembly.hpp"
#include "kfactor/metrics.hpp"
#include "kfactor/models.hpp"

#include <cstdint>
#include <vector>

namespace kf::testing {

/// K factor networks over one freshly initialized CKN (cnn3 on 16x16 inputs).
std::vector<models::FactorNetwork> make_factor_networks(const std::vector<std::size_t>& classes, std::uint64_t seed);

assembly::FactorHub make_hub(const std::vector<models::FactorNetwork>& factors);

Tensor random_images(std::size_t n, std::uint64_t seed);

/// Every combination of the given factor cardinalities, each repeated `repeats` times.
metrics::IndexMatrix grid_factors(const std::vector<int>& cards, int repeats = 1);
/// Codes equal to the factor indices (one code dim per factor).
metrics::CodeMatrix perfect_code(const metrics::IndexMatrix& factors);
/// Gaussian codes independent of the factors.
metrics::CodeMatrix noise_code(const metrics::IndexMatrix& factors, Eigen::Index dims, std::uint64_t seed);

}  // namespace kf::testing
