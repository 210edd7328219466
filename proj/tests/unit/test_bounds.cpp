#include <gtest/gtest.h>

#include "kfactor/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace kf::bounds;

TEST(VerifyBounds, AllPropertiesHold) {
  const auto rep = verify_bounds();
  EXPECT_TRUE(rep.passed()) << rep.summary();
  EXPECT_GE(rep.properties.size(), 6u);
  std::set<std::string> names;
  for (const auto& p : rep.properties) {
    EXPECT_TRUE(p.passed) << p.name << " worst " << p.worst_error;
    EXPECT_GT(p.cases, 0) << p.name;
    EXPECT_TRUE(std::isfinite(p.worst_error)) << p.name;
    EXPECT_LE(p.worst_error, p.tolerance) << p.name;
    names.insert(p.name);
  }
  EXPECT_EQ(names.size(), rep.properties.size());
  for (const char* required : {"dv_le_mi_random", "dv_tight_at_optimal", "kl_matches_quadrature", "kl_reference_values"})
    EXPECT_TRUE(names.count(required)) << required;
}

TEST(VerifyBounds, CaseCountsFollowOptions) {
  SuiteOptions opt;
  opt.random_tables = 120;
  opt.kl_cases = 100;
  const auto rep = verify_bounds(opt);
  for (const auto& p : rep.properties) {
    if (p.name == "dv_le_mi_random") EXPECT_GE(p.cases, 120);
    if (p.name == "kl_matches_quadrature") EXPECT_GE(p.cases, 100);
  }
}

TEST(VerifyBounds, KlSignFlipIsCaught) {
  SuiteOptions opt;
  opt.flip_kl_sign = true;
  const auto rep = verify_bounds(opt);
  EXPECT_FALSE(rep.passed());
  for (const auto& p : rep.properties) {
    const bool about_kl = p.name.rfind("kl_", 0) == 0;
    // Only properties that evaluate the KL can notice the flip.
    if (!about_kl) EXPECT_TRUE(p.passed) << p.name;
  }
  const auto failed = std::count_if(rep.properties.begin(), rep.properties.end(), [](const auto& p) { return !p.passed; });
  EXPECT_GE(failed, 2);
  EXPECT_NE(rep.summary().find("FAIL kl_nonnegative"), std::string::npos) << rep.summary();
}

TEST(VerifyBounds, Deterministic) {
  const auto a = verify_bounds(), b = verify_bounds();
  ASSERT_EQ(a.properties.size(), b.properties.size());
  for (std::size_t i = 0; i < a.properties.size(); ++i) EXPECT_EQ(a.properties[i].worst_error, b.properties[i].worst_error);
}
