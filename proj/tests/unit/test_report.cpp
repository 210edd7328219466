#include <gtest/gtest.h>

#include "kfactor/error.hpp"
#include "kfactor/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

using namespace kf;
using namespace kf::report;
namespace fs = std::filesystem;

namespace {

MetricReport sample_report() {
  MetricReport r;
  r.config_digest = "abc123";
  r.created_at = "2026-01-01T00:00:00Z";
  for (std::uint64_t seed : {0u, 1u, 2u})
    for (const char* method : {"mtl", "kd", "kf"})
      for (int task = 0; task < 2; ++task)
        r.tasks.push_back({method, seed, task, 0.8 + 0.01 * static_cast<double>(seed) + 0.001 * task, 0.9 + 0.01 * task});
  for (std::uint64_t seed : {0u, 1u, 2u})
    for (const char* method : {"mtl", "kf"})
      r.disentanglement.push_back({method, seed, 0.1 * static_cast<double>(seed + 1), 0.2, 0.3, 0.4});
  r.cka.push_back({0, {"a", "b"}, {{1.0, 0.25}, {0.25, 1.0}}, 0.25, 0.5});
  r.bounds.push_back({0, "dv_optimal_critic_2x2", 0.1927, 0.1927});
  r.bounds.push_back({0, "dv_heldout_batch", 0.05, std::nullopt});
  return r;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Report, JsonRoundTrip) {
  const auto r = sample_report();
  EXPECT_EQ(from_json(to_json(r)), r);
}

TEST(Report, JsonLinesRoundTrip) {
  const auto r = sample_report();
  const std::string lines = to_json_lines(r);
  EXPECT_EQ(from_json_lines(lines), r);
  EXPECT_EQ(count(lines, "\n"), 1 + r.tasks.size() + r.disentanglement.size() + r.cka.size() + r.bounds.size());
}

TEST(Report, SaveLoadAndMissing) {
  const auto dir = fs::temp_directory_path() / "kfactor_test_report";
  fs::create_directories(dir);
  const auto r = sample_report();
  save(dir / "r.json", r);
  EXPECT_EQ(load(dir / "r.json"), r);
  EXPECT_THROW(load(dir / "missing.json"), NotFound);
  EXPECT_THROW(from_json("{not json"), InvalidArgument);
}

TEST(Report, ValidateRejectsNonFinite) {
  auto r = sample_report();
  EXPECT_NO_THROW(r.validate());
  r.tasks[3].auc = std::nan("");
  EXPECT_THROW(r.validate(), InvalidArgument);
  r = sample_report();
  r.bounds[0].oracle = INFINITY;
  EXPECT_THROW(r.validate(), InvalidArgument);
}

TEST(Report, NumericContentIgnoresTimestamp) {
  auto a = sample_report(), b = sample_report();
  b.created_at = "2030-05-05T00:00:00Z";
  EXPECT_EQ(numeric_content(a), numeric_content(b));
  b.disentanglement[0].mig += 1e-15;
  EXPECT_NE(numeric_content(a), numeric_content(b));
}

TEST(Report, TableHasOneRowPerMethodTask) {
  const std::string table = render_table(sample_report());
  std::istringstream in(table);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::string method, task;
    words >> method >> task;
    if ((method == "mtl" || method == "kd" || method == "kf") && (task == "0" || task == "1")) ++rows;
  }
  EXPECT_EQ(rows, 6u);
  EXPECT_NE(table.find("dv_optimal_critic_2x2"), std::string::npos);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v{5, 1, 4, 2, 3};
  EXPECT_EQ(quantile(v, 0.0), 1.0);
  EXPECT_EQ(quantile(v, 0.5), 3.0);
  EXPECT_EQ(quantile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
}

TEST(BoxStats, MatchDirectQuantiles) {
  const std::vector<double> seeds{0.31, 0.12, 0.55, 0.47, 0.29};
  std::vector<double> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  // Position q*(n-1) on the sorted list: 1 for q1, 2 for the median, 3 for q3.
  const auto b = box_stats(seeds);
  EXPECT_EQ(b.min, sorted[0]);
  EXPECT_EQ(b.q1, sorted[1]);
  EXPECT_EQ(b.median, sorted[2]);
  EXPECT_EQ(b.q3, sorted[3]);
  EXPECT_EQ(b.max, sorted[4]);
}

TEST(Plots, WritesSvgFiles) {
  const auto dir = fs::temp_directory_path() / "kfactor_test_plots";
  fs::remove_all(dir);
  const auto files = write_plots(dir, sample_report());
  EXPECT_EQ(files.size(), 5u);
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(f)) << f;
    EXPECT_GT(fs::file_size(f), 100u);
  }
  const std::string svg = svg_bar_plot("t", {{"a", 0.5}, {"b", 1.0}});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
