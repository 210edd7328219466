// kfactor: experiment runner for knowledge factorization.
//
// Exit codes: 0 success, 1 failure, 2 configuration error.

#include "kfactor/bounds.hpp"
#include "kfactor/config.hpp"
#include "kfactor/error.hpp"
#include "kfactor/pipeline.hpp"
#include "kfactor/report.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

namespace fs = std::filesystem;
using kf::pipeline::Stage;

constexpr int kFailure = 1;
constexpr int kConfigError = 2;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config,-c", args.config, "experiment config (YAML)");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--out,-o", args.out, "run directory (overrides the config's output_dir)");
  cmd->add_option("--seed-override", args.seed_override, "run a single seed instead of evaluation.seeds");
  cmd->add_flag("--quiet,-q", args.quiet, "suppress progress messages");
}

kf::pipeline::RunOptions options_from(const CommonArgs& args, std::vector<Stage> stages) {
  kf::pipeline::RunOptions opt;
  opt.out_dir = args.out;
  opt.seed_override = args.seed_override;
  opt.stages = std::move(stages);
  opt.log = args.quiet ? nullptr : &std::cerr;
  return opt;
}

int run_stages(const CommonArgs& args, const std::vector<Stage>& stages) {
  const auto cfg = kf::config::load(args.config);
  const auto result = kf::pipeline::run(cfg, options_from(args, stages));
  if (!args.quiet) std::cerr << "run directory: " << result.root.string() << '\n';
  return 0;
}

fs::path run_dir_from(const CommonArgs& args, const std::string& run_dir) {
  if (!run_dir.empty()) return run_dir;
  if (!args.out.empty()) return args.out;
  if (args.config.empty()) throw kf::InvalidArgument("report: give --run-dir, --out or --config");
  const auto cfg = kf::config::load(args.config);
  return kf::pipeline::resolve_output_dir(cfg, options_from(args, {}));
}

int report_command(const CommonArgs& args, const std::string& run_dir, const std::string& format,
                   const std::string& plots_dir) {
  const fs::path dir = run_dir_from(args, run_dir);
  const auto rep = kf::pipeline::load_report(dir);
  if (format == "table") {
    std::cout << kf::report::render_table(rep);
  } else if (format == "json-lines") {
    std::cout << kf::report::to_json_lines(rep);
  } else {
    const fs::path target = plots_dir.empty() ? dir / "plots" : fs::path(plots_dir);
    for (const auto& p : kf::report::write_plots(target, rep)) std::cout << p.string() << '\n';
  }
  return 0;
}

int verify_bounds_command(bool flip_kl_sign) {
  kf::bounds::SuiteOptions opt;
  opt.flip_kl_sign = flip_kl_sign;
  const auto rep = kf::bounds::verify_bounds(opt);
  std::cout << rep.summary();
  return rep.passed() ? 0 : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge factorization experiments"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string stages_arg;
  auto* run_cmd = app.add_subcommand("run", "run pipeline stages in dependency order");
  add_common(run_cmd, args, true);
  run_cmd->add_option("--stages", stages_arg, "comma-separated subset of data,teacher,factorize,assemble,evaluate,metrics");

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (Stage s : kf::pipeline::all_stages()) {
    auto* cmd = app.add_subcommand(kf::pipeline::to_string(s), "run only the " + kf::pipeline::to_string(s) + " stage");
    add_common(cmd, args, true);
    stage_cmds.emplace_back(cmd, s);
  }

  std::string run_dir, format = "table", plots_dir;
  auto* report_cmd = app.add_subcommand("report", "render the metric report of a finished run");
  add_common(report_cmd, args, false);
  report_cmd->add_option("--run-dir", run_dir, "run directory holding report.json");
  report_cmd->add_option("--format,-f", format, "table, json-lines or plots")
      ->check(CLI::IsMember({"table", "json-lines", "plots"}));
  report_cmd->add_option("--plots-dir", plots_dir, "where SVG plots go (default <run>/plots)");

  bool flip_kl_sign = false;
  auto* bounds_cmd = app.add_subcommand("verify-bounds", "check every MI bound against exact oracles");
  bounds_cmd->add_flag("--inject-kl-sign-flip", flip_kl_sign, "negate the KL under test (the suite must then fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  std::vector<Stage> requested;
  try {
    requested = kf::pipeline::parse_stage_list(stages_arg);
  } catch (const kf::InvalidArgument& e) {
    std::cerr << "error: --stages: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (run_cmd->parsed()) return run_stages(args, requested);
    for (const auto& [cmd, stage] : stage_cmds)
      if (cmd->parsed()) return run_stages(args, {stage});
    if (report_cmd->parsed()) return report_command(args, run_dir, format, plots_dir);
    if (bounds_cmd->parsed()) return verify_bounds_command(flip_kl_sign);
  } catch (const kf::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const kf::DependencyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
