#pragma once

// Structured experiment results and their renderings: plain-text tables,
// JSON lines and static SVG plots.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kf::report {

struct TaskResult {
  std::string method;  // "teacher", "mtl", "kd", "kf", ...
  std::uint64_t seed = 0;
  int task = 0;
  double accuracy = 0.0;
  double auc = 0.0;

  bool operator==(const TaskResult&) const = default;
};

struct DisentanglementResult {
  std::string method;
  std::uint64_t seed = 0;
  double mig = 0.0;
  double sap = 0.0;
  double dci = 0.0;
  double factor_vae = 0.0;

  bool operator==(const DisentanglementResult&) const = default;
};

struct CkaResult {
  std::uint64_t seed = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> matrix;  // symmetric, labels x labels
  double kf_tsn_mean = 0.0;      // mean pairwise CKA among factorized TSN features
  double kd_student_mean = 0.0;  // mean pairwise CKA among distilled single-task students

  bool operator==(const CkaResult&) const = default;
};

struct BoundDiagnostic {
  std::uint64_t seed = 0;
  std::string name;
  double estimate = 0.0;
  std::optional<double> oracle;

  bool operator==(const BoundDiagnostic&) const = default;
};

struct MetricReport {
  std::string config_digest;
  std::string created_at;  // informational; excluded from numeric comparison
  std::vector<TaskResult> tasks;
  std::vector<DisentanglementResult> disentanglement;
  std::vector<CkaResult> cka;
  std::vector<BoundDiagnostic> bounds;

  /// Throws InvalidArgument if any numeric field is non-finite.
  void validate() const;
  bool operator==(const MetricReport&) const = default;
};

std::string to_json(const MetricReport& report);
MetricReport from_json(const std::string& json);
void save(const std::filesystem::path& path, const MetricReport& report);
MetricReport load(const std::filesystem::path& path);

/// Every numeric field plus the config digest, in a canonical text form.
/// Two reports with equal numeric content give equal strings.
std::string numeric_content(const MetricReport& report);

/// One JSON object per record, tagged with "type"; parses back to the same report.
std::string to_json_lines(const MetricReport& report);
MetricReport from_json_lines(const std::string& text);

/// Comparison tables: one row per (method, task) with seed mean/std of accuracy
/// and AUC, then one row per method with median disentanglement scores and the CKA means.
std::string render_table(const MetricReport& report);

/// Linear-interpolation quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);

struct BoxStats {
  double min, q1, median, q3, max;
};
BoxStats box_stats(const std::vector<double>& values);

struct BoxSeries {
  std::string label;
  std::vector<double> values;
};
struct BarSeries {
  std::string label;
  double value;
};

std::string svg_box_plot(const std::string& title, const std::vector<BoxSeries>& series);
std::string svg_bar_plot(const std::string& title, const std::vector<BarSeries>& series);

/// Writes box plots of each disentanglement metric and a bar plot of mean AUC
/// per method into `dir`; returns the files written.
std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir, const MetricReport& report);

}  // namespace kf::report
