#pragma once

// Executable bound-validity suite: every variational MI bound used in
// training checked against exact oracles (discrete enumeration, Gaussian
// closed forms and numerical quadrature).

#include <cstdint>
#include <string>
#include <vector>

namespace kf::bounds {

struct PropertyResult {
  std::string name;
  std::string description;
  bool passed = false;
  double worst_error = 0.0;  // largest violation or mismatch observed
  double tolerance = 0.0;
  int cases = 0;
};

struct SuiteReport {
  std::vector<PropertyResult> properties;
  double seconds = 0.0;

  bool passed() const;
  std::string summary() const;
};

struct SuiteOptions {
  std::uint64_t seed = 20240601;
  int random_tables = 200;
  int kl_cases = 100;
  // Mutation hook for the suite's own tests: negates the KL under test.
  bool flip_kl_sign = false;
};

SuiteReport verify_bounds(const SuiteOptions& options = {});

}  // namespace kf::bounds
