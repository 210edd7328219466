#include "kfactor/report.hpp"

#include "kfactor/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace kf::report {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON

namespace {

json task_json(const TaskResult& t) {
  return {{"method", t.method}, {"seed", t.seed}, {"task", t.task}, {"accuracy", t.accuracy}, {"auc", t.auc}};
}
TaskResult task_from(const json& j) {
  return {j.at("method"), j.at("seed"), j.at("task"), j.at("accuracy"), j.at("auc")};
}

json dis_json(const DisentanglementResult& d) {
  return {{"method", d.method}, {"seed", d.seed}, {"mig", d.mig}, {"sap", d.sap}, {"dci", d.dci}, {"factor_vae", d.factor_vae}};
}
DisentanglementResult dis_from(const json& j) {
  return {j.at("method"), j.at("seed"), j.at("mig"), j.at("sap"), j.at("dci"), j.at("factor_vae")};
}

json cka_json(const CkaResult& c) {
  return {{"seed", c.seed}, {"labels", c.labels}, {"matrix", c.matrix}, {"kf_tsn_mean", c.kf_tsn_mean},
          {"kd_student_mean", c.kd_student_mean}};
}
CkaResult cka_from(const json& j) {
  return {j.at("seed"), j.at("labels"), j.at("matrix"), j.at("kf_tsn_mean"), j.at("kd_student_mean")};
}

json bound_json(const BoundDiagnostic& b) {
  return {{"seed", b.seed}, {"name", b.name}, {"estimate", b.estimate}, {"oracle", b.oracle ? json(*b.oracle) : json(nullptr)}};
}
BoundDiagnostic bound_from(const json& j) {
  BoundDiagnostic b{j.at("seed"), j.at("name"), j.at("estimate"), std::nullopt};
  if (!j.at("oracle").is_null()) b.oracle = j.at("oracle").get<double>();
  return b;
}

json report_json(const MetricReport& r) {
  json j{{"config_digest", r.config_digest}, {"created_at", r.created_at}};
  j["tasks"] = json::array();
  for (const auto& t : r.tasks) j["tasks"].push_back(task_json(t));
  j["disentanglement"] = json::array();
  for (const auto& d : r.disentanglement) j["disentanglement"].push_back(dis_json(d));
  j["cka"] = json::array();
  for (const auto& c : r.cka) j["cka"].push_back(cka_json(c));
  j["bounds"] = json::array();
  for (const auto& b : r.bounds) j["bounds"].push_back(bound_json(b));
  return j;
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string(what) + ": " + e.what());
  }
}

void require_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) throw InvalidArgument("metric report: non-finite " + field);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

double mean(const std::vector<double>& v) { return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void MetricReport::validate() const {
  for (const auto& t : tasks) {
    require_finite(t.accuracy, "accuracy");
    require_finite(t.auc, "auc");
  }
  for (const auto& d : disentanglement) {
    for (double v : {d.mig, d.sap, d.dci, d.factor_vae}) require_finite(v, "disentanglement score");
  }
  for (const auto& c : cka) {
    require_finite(c.kf_tsn_mean, "CKA mean");
    require_finite(c.kd_student_mean, "CKA mean");
    for (const auto& row : c.matrix)
      for (double v : row) require_finite(v, "CKA entry");
  }
  for (const auto& b : bounds) {
    require_finite(b.estimate, "bound estimate");
    if (b.oracle) require_finite(*b.oracle, "bound oracle");
  }
}

std::string to_json(const MetricReport& report) { return report_json(report).dump(1); }

MetricReport from_json(const std::string& text) {
  return guarded("metric report", [&] {
    const json j = json::parse(text);
    MetricReport r;
    r.config_digest = j.at("config_digest");
    r.created_at = j.at("created_at");
    for (const auto& t : j.at("tasks")) r.tasks.push_back(task_from(t));
    for (const auto& d : j.at("disentanglement")) r.disentanglement.push_back(dis_from(d));
    for (const auto& c : j.at("cka")) r.cka.push_back(cka_from(c));
    for (const auto& b : j.at("bounds")) r.bounds.push_back(bound_from(b));
    return r;
  });
}

void save(const std::filesystem::path& path, const MetricReport& report) {
  report.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write report '" + path.string() + "'");
  out << to_json(report) << '\n';
}

MetricReport load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("metric report '" + path.string() + "' not found");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string numeric_content(const MetricReport& report) {
  json j = report_json(report);
  j.erase("created_at");
  return j.dump();
}

std::string to_json_lines(const MetricReport& report) {
  std::ostringstream out;
  out << json{{"type", "header"}, {"config_digest", report.config_digest}, {"created_at", report.created_at}}.dump() << '\n';
  for (const auto& t : report.tasks) {
    json j = task_json(t);
    j["type"] = "task";
    out << j.dump() << '\n';
  }
  for (const auto& d : report.disentanglement) {
    json j = dis_json(d);
    j["type"] = "disentanglement";
    out << j.dump() << '\n';
  }
  for (const auto& c : report.cka) {
    json j = cka_json(c);
    j["type"] = "cka";
    out << j.dump() << '\n';
  }
  for (const auto& b : report.bounds) {
    json j = bound_json(b);
    j["type"] = "bound";
    out << j.dump() << '\n';
  }
  return out.str();
}

MetricReport from_json_lines(const std::string& text) {
  return guarded("metric report lines", [&] {
    MetricReport r;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string type = j.at("type");
      if (type == "header") {
        r.config_digest = j.at("config_digest");
        r.created_at = j.at("created_at");
      } else if (type == "task") r.tasks.push_back(task_from(j));
      else if (type == "disentanglement") r.disentanglement.push_back(dis_from(j));
      else if (type == "cka") r.cka.push_back(cka_from(j));
      else if (type == "bound") r.bounds.push_back(bound_from(j));
      else throw InvalidArgument("metric report lines: unknown record type '" + type + "'");
    }
    return r;
  });
}

// ---------------------------------------------------------------------------
// Tables

std::string render_table(const MetricReport& report) {
  std::ostringstream out;
  // Methods in first-appearance order so the baseline/KD/KF ordering of the run is kept.
  std::vector<std::string> methods;
  std::map<std::pair<std::string, int>, std::pair<std::vector<double>, std::vector<double>>> cells;
  std::vector<int> tasks;
  for (const auto& t : report.tasks) {
    if (std::find(methods.begin(), methods.end(), t.method) == methods.end()) methods.push_back(t.method);
    if (std::find(tasks.begin(), tasks.end(), t.task) == tasks.end()) tasks.push_back(t.task);
    auto& cell = cells[{t.method, t.task}];
    cell.first.push_back(t.accuracy);
    cell.second.push_back(t.auc);
  }
  std::sort(tasks.begin(), tasks.end());

  out << "Task performance (mean +- std over seeds)\n";
  out << std::left << std::setw(10) << "method" << std::setw(6) << "task" << std::setw(22) << "accuracy"
      << "auc\n";
  for (const auto& m : methods) {
    for (int task : tasks) {
      const auto it = cells.find({m, task});
      if (it == cells.end()) continue;
      const auto& [acc, auc] = it->second;
      out << std::left << std::setw(10) << m << std::setw(6) << task << std::setw(22)
          << (fmt(mean(acc)) + " +- " + fmt(stddev(acc))) << fmt(mean(auc)) << " +- " << fmt(stddev(auc)) << '\n';
    }
  }

  if (!report.disentanglement.empty()) {
    out << "\nDisentanglement (median over seeds)\n";
    out << std::left << std::setw(10) << "method" << std::setw(10) << "MIG" << std::setw(10) << "SAP" << std::setw(10)
        << "DCI" << "FactorVAE\n";
    std::vector<std::string> dmethods;
    for (const auto& d : report.disentanglement)
      if (std::find(dmethods.begin(), dmethods.end(), d.method) == dmethods.end()) dmethods.push_back(d.method);
    for (const auto& m : dmethods) {
      std::vector<double> mig, sap, dci, fv;
      for (const auto& d : report.disentanglement) {
        if (d.method != m) continue;
        mig.push_back(d.mig);
        sap.push_back(d.sap);
        dci.push_back(d.dci);
        fv.push_back(d.factor_vae);
      }
      out << std::left << std::setw(10) << m << std::setw(10) << fmt(quantile(mig, 0.5)) << std::setw(10)
          << fmt(quantile(sap, 0.5)) << std::setw(10) << fmt(quantile(dci, 0.5)) << fmt(quantile(fv, 0.5)) << '\n';
    }
  }

  if (!report.cka.empty()) {
    std::vector<double> kf, kd;
    for (const auto& c : report.cka) {
      kf.push_back(c.kf_tsn_mean);
      kd.push_back(c.kd_student_mean);
    }
    out << "\nMean pairwise linear CKA (mean over seeds)\n";
    out << "kf TSNs      " << fmt(mean(kf)) << '\n';
    out << "kd students  " << fmt(mean(kd)) << '\n';
  }

  if (!report.bounds.empty()) {
    out << "\nBound diagnostics\n";
    for (const auto& b : report.bounds) {
      out << "seed " << b.seed << "  " << std::left << std::setw(28) << b.name << fmt(b.estimate, 6);
      if (b.oracle) out << "  (oracle " << fmt(*b.oracle, 6) << ")";
      out << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Plots

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BoxStats box_stats(const std::vector<double>& values) {
  return {quantile(values, 0.0), quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75),
          quantile(values, 1.0)};
}

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

struct Axis {
  double lo, hi;
  double y(double v) const { return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - lo) / (hi - lo)); }
};

Axis value_axis(double lo, double hi) {
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

void frame(std::ostringstream& svg, const std::string& title, const Axis& axis) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape(title) << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = axis.lo + (axis.hi - axis.lo) * i / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << axis.y(v) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(v, 3) << "</text>\n";
  }
}

void slot_label(std::ostringstream& svg, double x, const std::string& label) {
  svg << "<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << escape(label) << "</text>\n";
}

}  // namespace

std::string svg_box_plot(const std::string& title, const std::vector<BoxSeries>& series) {
  if (series.empty()) throw InvalidArgument("box plot: no series");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    if (s.values.empty()) throw InvalidArgument("box plot: series '" + s.label + "' is empty");
    lo = std::min(lo, *std::min_element(s.values.begin(), s.values.end()));
    hi = std::max(hi, *std::max_element(s.values.begin(), s.values.end()));
  }
  const Axis axis = value_axis(lo, hi);
  std::ostringstream svg;
  frame(svg, title, axis);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const BoxStats b = box_stats(series[i].values);
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5), half = slot * 0.2;
    svg << "<line x1=\"" << cx << "\" y1=\"" << axis.y(b.min) << "\" x2=\"" << cx << "\" y2=\"" << axis.y(b.max)
        << "\" stroke=\"black\"/>\n";
    svg << "<rect x=\"" << cx - half << "\" y=\"" << axis.y(b.q3) << "\" width=\"" << 2 * half << "\" height=\""
        << std::max(axis.y(b.q1) - axis.y(b.q3), 0.5) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << cx - half << "\" y1=\"" << axis.y(b.median) << "\" x2=\"" << cx + half << "\" y2=\""
        << axis.y(b.median) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    slot_label(svg, cx, series[i].label);
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_bar_plot(const std::string& title, const std::vector<BarSeries>& series) {
  if (series.empty()) throw InvalidArgument("bar plot: no series");
  double hi = 0.0, lo = 0.0;
  for (const auto& s : series) {
    hi = std::max(hi, s.value);
    lo = std::min(lo, s.value);
  }
  const Axis axis = value_axis(lo, hi);
  std::ostringstream svg;
  frame(svg, title, axis);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5), half = slot * 0.3;
    const double top = axis.y(std::max(series[i].value, 0.0)), base = axis.y(std::min(series[i].value, 0.0));
    svg << "<rect x=\"" << cx - half << "\" y=\"" << top << "\" width=\"" << 2 * half << "\" height=\""
        << std::max(base - top, 0.5) << "\" fill=\"#6baed6\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << cx << "\" y=\"" << top - 4 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(series[i].value, 3) << "</text>\n";
    slot_label(svg, cx, series[i].label);
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir, const MetricReport& report) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto write = [&](const std::string& name, const std::string& svg) {
    const auto path = dir / name;
    std::ofstream(path) << svg;
    written.push_back(path);
  };

  if (!report.disentanglement.empty()) {
    std::vector<std::string> methods;
    for (const auto& d : report.disentanglement)
      if (std::find(methods.begin(), methods.end(), d.method) == methods.end()) methods.push_back(d.method);
    const std::vector<std::pair<std::string, double DisentanglementResult::*>> metrics{
        {"mig", &DisentanglementResult::mig},
        {"sap", &DisentanglementResult::sap},
        {"dci", &DisentanglementResult::dci},
        {"factor_vae", &DisentanglementResult::factor_vae}};
    for (const auto& [name, field] : metrics) {
      std::vector<BoxSeries> series;
      for (const auto& m : methods) {
        BoxSeries s{m, {}};
        for (const auto& d : report.disentanglement)
          if (d.method == m) s.values.push_back(d.*field);
        series.push_back(std::move(s));
      }
      write(name + "_box.svg", svg_box_plot(name + " across seeds", series));
    }
  }

  if (!report.tasks.empty()) {
    std::vector<std::string> methods;
    for (const auto& t : report.tasks)
      if (std::find(methods.begin(), methods.end(), t.method) == methods.end()) methods.push_back(t.method);
    std::vector<BarSeries> bars;
    for (const auto& m : methods) {
      std::vector<double> auc;
      for (const auto& t : report.tasks)
        if (t.method == m) auc.push_back(t.auc);
      bars.push_back({m, mean(auc)});
    }
    write("auc_bar.svg", svg_bar_plot("mean test ROC-AUC", bars));
  }
  return written;
}

}  // namespace kf::report
