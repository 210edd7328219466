#include "kfactor/pipeline.hpp"

#include "kfactor/assembly.hpp"
#include "kfactor/checkpoint.hpp"
#include "kfactor/digest.hpp"
#include "kfactor/error.hpp"
#include "kfactor/metrics.hpp"
#include "kfactor/mi.hpp"
#include "kfactor/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace kf::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::data: return "data";
    case Stage::teacher: return "teacher";
    case Stage::factorize: return "factorize";
    case Stage::assemble: return "assemble";
    case Stage::evaluate: return "evaluate";
    case Stage::metrics: return "metrics";
  }
  throw InternalError("unknown stage");
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : all_stages())
    if (to_string(s) == name) return s;
  throw InvalidArgument("unknown stage '" + name + "'");
}

std::vector<Stage> all_stages() {
  return {Stage::data, Stage::teacher, Stage::factorize, Stage::assemble, Stage::evaluate, Stage::metrics};
}

std::vector<Stage> parse_stage_list(const std::string& list) {
  if (list.empty() || list == "all") return all_stages();
  std::vector<Stage> picked;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    const Stage s = stage_from_string(item);
    if (std::find(picked.begin(), picked.end(), s) == picked.end()) picked.push_back(s);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

fs::path resolve_output_dir(const config::ExperimentConfig& cfg, const RunOptions& options) {
  if (!options.out_dir.empty()) return options.out_dir;
  const fs::path dir(cfg.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv(kOutRootEnv); root && *root) return fs::path(root) / dir;
  }
  return dir;
}

std::vector<std::uint64_t> run_seeds(const config::ExperimentConfig& cfg, const RunOptions& options) {
  if (options.seed_override) return {*options.seed_override};
  return cfg.evaluation.seeds;
}

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t run_seed) {
  return run_seed == 0 ? base : base ^ (run_seed * 0x9E3779B97F4A7C15ULL);
}

}  // namespace

config::ExperimentConfig seeded_config(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  config::ExperimentConfig c = cfg;
  c.teacher.train.seed = mix_seed(c.teacher.train.seed, seed);
  c.factorization.train.seed = mix_seed(c.factorization.train.seed, seed);
  c.baselines.train.seed = mix_seed(c.baselines.train.seed, seed);
  return c;
}

std::string stage_digest(const config::ExperimentConfig& cfg, Stage stage, std::uint64_t seed,
                         const std::vector<std::uint64_t>& seeds) {
  const auto sc = seeded_config(cfg, seed);
  Sha256 h;
  h.update(to_string(stage)).update("\n");
  switch (stage) {
    case Stage::data:
      return h.update(config::section_digest(cfg, "dataset")).hex();
    case Stage::teacher:
      h.update(std::to_string(seed)).update(config::section_digest(sc, "teacher"));
      return h.update(stage_digest(cfg, Stage::data, seed, seeds)).hex();
    case Stage::factorize:
      h.update(config::section_digest(sc, "factorization")).update(config::section_digest(sc, "baselines"));
      return h.update(stage_digest(cfg, Stage::teacher, seed, seeds)).hex();
    case Stage::assemble:
      return h.update(stage_digest(cfg, Stage::factorize, seed, seeds)).hex();
    case Stage::evaluate:
      h.update(cfg.evaluation.auc ? "auc" : "no-auc");
      return h.update(stage_digest(cfg, Stage::assemble, seed, seeds)).hex();
    case Stage::metrics:
      h.update(config::section_digest(cfg, "evaluation")).update(config::digest(cfg));
      for (auto s : seeds) h.update(std::to_string(s)).update(stage_digest(cfg, Stage::evaluate, s, seeds));
      return h.hex();
  }
  throw InternalError("unknown stage");
}

fs::path report_path(const fs::path& run_dir) { return run_dir / "report.json"; }

report::MetricReport load_report(const fs::path& run_dir) {
  const auto path = report_path(run_dir);
  if (!fs::exists(path)) throw NotFound("no metric report in '" + run_dir.string() + "' (run the metrics stage)");
  return report::load(path);
}

LoadedData load_data(const fs::path& run_dir) {
  const auto exported = data::import_split(run_dir / "data");
  LoadedData d{exported.spec, data::TaskDataset::from_samples(exported.split.train, exported.spec),
               data::TaskDataset::from_samples(exported.split.test, exported.spec), {}};
  for (const auto* part : {&exported.split.train, &exported.split.test})
    for (const auto& s : *part) d.latents.push_back(s.latent_index);
  return d;
}

namespace {

// ---------------------------------------------------------------------------
// Stage bookkeeping

fs::path stage_dir(const fs::path& root, Stage stage, std::uint64_t seed) {
  switch (stage) {
    case Stage::data: return root / "data";
    case Stage::metrics: return root / "metrics";
    default: return root / ("seed_" + std::to_string(seed)) / to_string(stage);
  }
}

bool seed_independent(Stage s) { return s == Stage::data || s == Stage::metrics; }

std::optional<std::string> recorded_digest(const fs::path& dir) {
  std::ifstream in(dir / "stage.json");
  if (!in) return std::nullopt;
  try {
    return json::parse(in).at("digest").get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

const std::map<Stage, std::vector<std::string>> kStageSections{
    {Stage::data, {"dataset"}},
    {Stage::teacher, {"teacher"}},
    {Stage::factorize, {"factorization", "baselines"}},
    {Stage::assemble, {"factorization"}},
    {Stage::evaluate, {"evaluation"}},
    {Stage::metrics, {"evaluation"}},
};

void write_stage_record(const fs::path& dir, Stage stage, std::optional<std::uint64_t> seed, const std::string& digest,
                        const config::ExperimentConfig& sc) {
  json sections = json::object();
  for (const auto& name : kStageSections.at(stage)) sections[name] = config::section_digest(sc, name);
  json j{{"stage", to_string(stage)},
         {"digest", digest},
         {"seed", seed ? json(*seed) : json(nullptr)},
         {"config_digest", config::digest(sc)},
         {"sections", sections}};
  std::ofstream(dir / "stage.json") << j.dump(1) << '\n';
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::size_t last_step(const train::TrainingLog& log) {
  return log.records().empty() ? 0 : log.records().back().step + 1;
}

ckpt::ModelMetadata metadata(const std::string& kind, std::uint64_t seed, std::size_t step,
                             const std::string& section_digest) {
  return {kind, seed, step, json{{"config_digest", section_digest}}.dump()};
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("stack_rows: nothing to stack");
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Shape shape = parts.front().shape();
  shape[0] = rows;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  return out;
}

Tensor concat_images(const Tensor& a, const Tensor& b) { return stack_rows({a, b}); }

RowMatrix hconcat(const std::vector<Tensor>& parts) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += static_cast<Eigen::Index>(p.matrix().cols());
  RowMatrix out(parts.front().matrix().rows(), cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.matrix().cols()) = p.matrix();
    c += p.matrix().cols();
  }
  return out;
}

constexpr std::size_t kChunk = 256;

std::vector<report::TaskResult> task_results(const std::string& method, std::uint64_t seed, std::size_t task,
                                             const train::TaskMetrics& m, bool auc) {
  if (auc && !std::isfinite(m.macro_auc)) {
    throw InvalidArgument(method + " task " + std::to_string(task) +
                          ": ROC-AUC undefined, the test split holds a single class of this task");
  }
  return {{method, seed, static_cast<int>(task), m.accuracy, auc ? m.macro_auc : 0.0}};
}

// ---------------------------------------------------------------------------
// Runner

class Runner {
 public:
  Runner(const config::ExperimentConfig& cfg, const RunOptions& options)
      : cfg_(cfg), options_(options), root_(resolve_output_dir(cfg, options)), seeds_(run_seeds(cfg, options)) {}

  RunResult run() {
    cfg_.validate();
    if (seeds_.empty()) throw ConfigError("evaluation.seeds", "at least one seed is required");
    fs::create_directories(root_);
    RunResult result{root_, {}};
    const auto stages = options_.stages.empty() ? all_stages() : options_.stages;
    const auto wanted = [&](Stage s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };

    if (wanted(Stage::data)) result.outcomes.push_back(execute(Stage::data, 0));
    for (auto seed : seeds_) {
      for (Stage s : {Stage::teacher, Stage::factorize, Stage::assemble, Stage::evaluate})
        if (wanted(s)) result.outcomes.push_back(execute(s, seed));
    }
    if (wanted(Stage::metrics)) result.outcomes.push_back(execute(Stage::metrics, 0));
    return result;
  }

 private:
  std::ostream* log() const { return options_.log; }

  void say(const std::string& msg) const {
    if (log()) *log() << msg << std::endl;
  }

  std::string label(Stage s, std::uint64_t seed) const {
    return seed_independent(s) ? to_string(s) : to_string(s) + " (seed " + std::to_string(seed) + ")";
  }

  void require_upstream(Stage upstream, std::uint64_t seed) const {
    const auto dir = stage_dir(root_, upstream, seed);
    const auto have = recorded_digest(dir);
    if (!have) {
      throw DependencyError(to_string(upstream), "missing upstream artifact '" + (dir / "stage.json").string() +
                                                     "'; run the " + to_string(upstream) + " stage first");
    }
    if (*have != stage_digest(cfg_, upstream, seed, seeds_)) {
      throw DependencyError(to_string(upstream), "upstream artifact in '" + dir.string() +
                                                     "' was produced by a different config; rerun that stage");
    }
  }

  StageOutcome execute(Stage stage, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const std::string digest = stage_digest(cfg_, stage, seed, seeds_);
    const auto dir = stage_dir(root_, stage, seed);
    StageOutcome outcome{stage, seed_independent(stage) ? std::nullopt : std::optional(seed), false, digest, 0.0};
    if (recorded_digest(dir) == digest) {
      outcome.skipped = true;
      say("[" + label(stage, seed) + "] up to date, skipped");
      return outcome;
    }
    switch (stage) {
      case Stage::data: break;
      case Stage::teacher: require_upstream(Stage::data, seed); break;
      case Stage::factorize: require_upstream(Stage::teacher, seed); break;
      case Stage::assemble: require_upstream(Stage::factorize, seed); break;
      case Stage::evaluate:
        require_upstream(Stage::assemble, seed);
        require_upstream(Stage::teacher, seed);
        break;
      case Stage::metrics:
        for (auto s : seeds_) require_upstream(Stage::evaluate, s);
        break;
    }
    say("[" + label(stage, seed) + "] running");
    // Stale outputs are removed first so a failed stage never leaves a mix of old and new files.
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto sc = seeded_config(cfg_, seed);
    switch (stage) {
      case Stage::data: run_data(dir); break;
      case Stage::teacher: run_teacher(dir, sc, seed); break;
      case Stage::factorize: run_factorize(dir, sc, seed); break;
      case Stage::assemble: run_assemble(dir, sc, seed); break;
      case Stage::evaluate: run_evaluate(dir, sc, seed); break;
      case Stage::metrics: run_metrics(dir); break;
    }
    write_stage_record(dir, stage, outcome.seed, digest, sc);
    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream msg;
    msg << "[" << label(stage, seed) << "] done in " << std::fixed << std::setprecision(1) << outcome.seconds << " s";
    say(msg.str());
    return outcome;
  }

  const LoadedData& data() {
    if (!data_) data_ = load_data(root_);
    return *data_;
  }

  // -------------------------------------------------------------------------

  void run_data(const fs::path& dir) {
    const auto& d = cfg_.dataset;
    data_.reset();
    if (!d.import_path.empty()) {
      const auto imported = data::import_split(d.import_path);
      data::export_split(dir, imported.spec, imported.split);
      return;
    }
    const auto grid = synth::build_latent_grid(d.spec, d.subsample, d.subsample_seed);
    auto split = synth::split_dataset(synth::render_all(d.spec, grid), d.split_ratio, d.split_seed);
    say("  " + std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) + " test samples");
    data::export_split(dir, d.spec, split);
  }

  void run_teacher(const fs::path& dir, const config::ExperimentConfig& sc, std::uint64_t seed) {
    train::TrainingLog log;
    const auto teacher = train::pretrain_teacher(data().train, sc.teacher.backbone, sc.teacher.train, &log);
    ckpt::save_checkpoint(dir / "teacher.kfckpt",
                          ckpt::make_multihead_checkpoint(
                              teacher, metadata("teacher", seed, last_step(log), config::section_digest(sc, "teacher"))));
    log.write_jsonl(dir / "log.jsonl");
  }

  models::MultiHeadNet load_teacher(std::uint64_t seed) const {
    return ckpt::multihead_from_checkpoint(
        ckpt::load_checkpoint(stage_dir(root_, Stage::teacher, seed) / "teacher.kfckpt"));
  }

  void run_factorize(const fs::path& dir, const config::ExperimentConfig& sc, std::uint64_t seed) {
    const auto teacher = load_teacher(seed);
    const std::string teacher_digest = teacher.digest();
    const auto& f = sc.factorization;
    auto set = train::factorize(teacher, data().train, f.objective, f.students(), f.train);
    save_factor_set(dir / "kf", set);

    const auto& b = sc.baselines;
    const std::string section = config::section_digest(sc, "baselines");
    if (b.multitask) {
      say("  multi-task baseline");
      train::TrainingLog log;
      const auto mtl = train::pretrain_teacher(data().train, b.backbone, b.train, &log);
      ckpt::save_checkpoint(dir / "mtl.kfckpt",
                            ckpt::make_multihead_checkpoint(mtl, metadata("mtl", seed, last_step(log), section)));
      log.write_jsonl(dir / "mtl_log.jsonl");
    }
    if (b.distilled) {
      // Same transfer weight and temperature as the factorized students, so the
      // two differ only in the shared trunk and the information terms.
      for (std::size_t j = 0; j < data().train.num_tasks(); ++j) {
        say("  distilled single-task student " + std::to_string(j));
        auto tc = b.train;
        tc.seed = b.train.seed + 101 * (j + 1);
        train::TrainingLog log;
        const auto student = train::train_single_task(data().train, b.backbone, j, &teacher, f.objective.lambda_kt,
                                                      f.objective.temperature, tc, &log);
        ckpt::save_checkpoint(dir / ("kd_" + std::to_string(j) + ".kfckpt"),
                              ckpt::make_multihead_checkpoint(student, metadata("kd", seed, last_step(log), section)));
        log.write_jsonl(dir / ("kd_" + std::to_string(j) + "_log.jsonl"));
      }
    }
    if (teacher.digest() != teacher_digest) throw InternalError("factorize modified the teacher");
  }

  fs::path factor_dir(std::uint64_t seed) const { return stage_dir(root_, Stage::factorize, seed); }

  void run_assemble(const fs::path& dir, const config::ExperimentConfig& sc, std::uint64_t seed) {
    const auto set = train::load_factor_set(factor_dir(seed) / "kf");
    assembly::FactorHub hub(set.ckn, set.teacher_digest, train::to_json(sc.factorization.objective));
    for (const auto& f : set.factors) hub.register_factor(f);
    assembly::save_hub(dir / "hub", hub);
  }

  void run_evaluate(const fs::path& dir, const config::ExperimentConfig& sc, std::uint64_t seed) {
    const auto& test = data().test;
    const bool auc = sc.evaluation.auc;
    report::MetricReport ev;
    ev.config_digest = config::digest(cfg_);
    const auto add = [&](const std::string& method, std::size_t task, const train::TaskMetrics& m) {
      for (auto& r : task_results(method, seed, task, m, auc)) ev.tasks.push_back(std::move(r));
    };

    const auto teacher = load_teacher(seed);
    const auto teacher_metrics = train::evaluate(teacher, test);
    for (std::size_t j = 0; j < teacher_metrics.size(); ++j) add("teacher", j, teacher_metrics[j]);

    const auto fdir = factor_dir(seed);
    if (fs::exists(fdir / "mtl.kfckpt")) {
      const auto mtl = ckpt::multihead_from_checkpoint(ckpt::load_checkpoint(fdir / "mtl.kfckpt"));
      const auto m = train::evaluate(mtl, test);
      for (std::size_t j = 0; j < m.size(); ++j) add("mtl", j, m[j]);
    }
    for (std::size_t j = 0; j < test.num_tasks(); ++j) {
      const auto path = fdir / ("kd_" + std::to_string(j) + ".kfckpt");
      if (!fs::exists(path)) continue;
      const auto student = ckpt::multihead_from_checkpoint(ckpt::load_checkpoint(path));
      const Tensor logits = train::map_chunks(test.images(), kChunk,
                                              [&](const Tensor& x) { return student.forward(x).front(); });
      add("kd", j, train::classification_metrics(logits, test.task_labels(j)));
    }

    // Factorized students are evaluated through the assembled hub and checked
    // against the standalone factor networks.
    const auto hub = assembly::load_hub(stage_dir(root_, Stage::assemble, seed) / "hub");
    const auto ids = hub.task_ids();
    const auto composite = assembly::assemble(hub, ids);
    std::vector<std::vector<Tensor>> chunks(ids.size());
    for (std::size_t begin = 0; begin < test.size(); begin += kChunk) {
      const Tensor x = test.images().slice_rows(begin, std::min(test.size(), begin + kChunk));
      auto pred = assembly::predict_composite(composite, x, assembly::PredictMode::per_task);
      for (std::size_t k = 0; k < ids.size(); ++k) chunks[k].push_back(std::move(pred.per_task[k]));
    }
    const auto set = train::load_factor_set(fdir / "kf");
    double worst = 0.0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const Tensor logits = stack_rows(chunks[k]);
      add("kf", static_cast<std::size_t>(ids[k]), train::classification_metrics(logits, test.task_labels(ids[k])));
      const auto& factor = set.factors.at(static_cast<std::size_t>(ids[k]));
      const Tensor standalone =
          train::map_chunks(test.images(), kChunk, [&](const Tensor& x) { return factor.predict(x); });
      worst = std::max(worst, (standalone.matrix() - logits.matrix()).cwiseAbs().maxCoeff());
    }
    ev.bounds.push_back({seed, "assembly_max_abs_diff", worst, 0.0});
    report::save(dir / "evaluation.json", ev);
  }

  void run_metrics(const fs::path& dir) {
    const auto& ev_cfg = cfg_.evaluation;
    report::MetricReport rep;
    rep.config_digest = config::digest(cfg_);
    rep.created_at = utc_now();

    const auto& d = data();
    const Tensor all_images = concat_images(d.train.images(), d.test.images());
    metrics::IndexMatrix factors(static_cast<Eigen::Index>(d.latents.size()),
                                 static_cast<Eigen::Index>(d.spec.num_factors()));
    for (std::size_t i = 0; i < d.latents.size(); ++i)
      for (std::size_t f = 0; f < d.spec.num_factors(); ++f)
        factors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = static_cast<int>(d.latents[i][f]);
    fs::create_directories(dir / "codes");
    {
      Tensor f(Shape{static_cast<std::size_t>(factors.rows()), static_cast<std::size_t>(factors.cols())});
      for (Eigen::Index i = 0; i < factors.size(); ++i) f[static_cast<std::size_t>(i)] = factors.data()[i];
      ckpt::save_tensor_file(dir / "codes" / "factors.kft", f);
    }

    // The fixed 2x2 table from the bound suite gives one oracle-checked DV figure per report.
    {
      RowMatrix p(2, 2);
      p << 0.4, 0.1, 0.1, 0.4;
      const mi::JointTable table(p);
      rep.bounds.push_back({0, "dv_optimal_critic_2x2", mi::dv_bound_exact(table, mi::optimal_critic(table)),
                            mi::exact_mi_discrete(table)});
    }

    for (auto seed : seeds_) {
      say("  metrics for seed " + std::to_string(seed));
      const auto ev = report::load(stage_dir(root_, Stage::evaluate, seed) / "evaluation.json");
      rep.tasks.insert(rep.tasks.end(), ev.tasks.begin(), ev.tasks.end());
      rep.bounds.insert(rep.bounds.end(), ev.bounds.begin(), ev.bounds.end());

      const auto fdir = factor_dir(seed);
      const auto teacher = load_teacher(seed);
      const auto set = train::load_factor_set(fdir / "kf");
      std::optional<models::MultiHeadNet> mtl;
      if (fs::exists(fdir / "mtl.kfckpt"))
        mtl = ckpt::multihead_from_checkpoint(ckpt::load_checkpoint(fdir / "mtl.kfckpt"));
      std::vector<models::MultiHeadNet> kd;
      for (std::size_t j = 0; j < d.train.num_tasks(); ++j) {
        const auto path = fdir / ("kd_" + std::to_string(j) + ".kfckpt");
        if (fs::exists(path)) kd.push_back(ckpt::multihead_from_checkpoint(ckpt::load_checkpoint(path)));
      }

      // Representations on every sample of the grid (train and test).
      std::vector<std::pair<std::string, RowMatrix>> reps;
      {
        std::vector<Tensor> parts;
        for (const auto& f : set.factors) parts.push_back(train::extract_features(*f.tsn, all_images));
        reps.emplace_back("kf", hconcat(parts));
      }
      if (mtl) reps.emplace_back("mtl", train::extract_features(mtl->backbone(), all_images).matrix());
      if (!kd.empty()) {
        std::vector<Tensor> parts;
        for (const auto& s : kd) parts.push_back(train::extract_features(s.backbone(), all_images));
        reps.emplace_back("kd", hconcat(parts));
      }
      reps.emplace_back("teacher", train::extract_features(teacher.backbone(), all_images).matrix());

      for (const auto& [method, codes] : reps) {
        ckpt::save_tensor_file(dir / "codes" / ("seed_" + std::to_string(seed) + "_" + method + ".kft"),
                               Tensor::from_matrix(codes));
      }

      if (ev_cfg.disentanglement) {
        metrics::FactorVaeOptions fv;
        fv.batch_size = ev_cfg.factor_vae_batch;
        fv.train_votes = ev_cfg.factor_vae_votes;
        fv.eval_votes = ev_cfg.factor_vae_votes;
        for (const auto& [method, codes] : reps) {
          const metrics::CodeMatrix cm{codes, factors};
          rep.disentanglement.push_back({method, seed, metrics::mig(cm, ev_cfg.bins), metrics::sap(cm, ev_cfg.bins),
                                         metrics::dci_disentanglement(cm),
                                         metrics::factor_vae_score(cm, ev_cfg.metric_seed + seed, fv)});
        }
      }

      if (ev_cfg.cka) {
        // Test-split features of every task representation.
        const Tensor& x = d.test.images();
        std::vector<std::pair<std::string, RowMatrix>> feats;
        for (const auto& f : set.factors)
          feats.emplace_back("kf_tsn_" + std::to_string(f.task_id), train::extract_features(*f.tsn, x).matrix());
        for (std::size_t j = 0; j < kd.size(); ++j)
          feats.emplace_back("kd_" + std::to_string(j), train::extract_features(kd[j].backbone(), x).matrix());
        feats.emplace_back("kf_ckn", train::extract_features(*set.ckn, x).matrix());
        if (mtl) feats.emplace_back("mtl", train::extract_features(mtl->backbone(), x).matrix());
        feats.emplace_back("teacher", train::extract_features(teacher.backbone(), x).matrix());

        report::CkaResult cka;
        cka.seed = seed;
        const std::size_t n = feats.size();
        cka.matrix.assign(n, std::vector<double>(n, 1.0));
        for (std::size_t a = 0; a < n; ++a) {
          cka.labels.push_back(feats[a].first);
          for (std::size_t b = a + 1; b < n; ++b)
            cka.matrix[a][b] = cka.matrix[b][a] = metrics::linear_cka(feats[a].second, feats[b].second);
        }
        const auto pair_mean = [&](const std::string& prefix) {
          double sum = 0.0;
          int count = 0;
          for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
              if (cka.labels[a].rfind(prefix, 0) == 0 && cka.labels[b].rfind(prefix, 0) == 0) {
                sum += cka.matrix[a][b];
                ++count;
              }
          return count ? sum / count : 0.0;
        };
        cka.kf_tsn_mean = pair_mean("kf_tsn_");
        cka.kd_student_mean = pair_mean("kd_");
        rep.cka.push_back(std::move(cka));
      }

      // DV estimate of the trained critic on a held-out batch, plus the
      // training-time estimate averaged over the last tenth of the steps.
      {
        const std::size_t n = std::min<std::size_t>(d.test.size(), 256);
        const Tensor x = d.test.images().slice_rows(0, n);
        const int layer = set.critic.layer_index;
        const Tensor zt = train::extract_block_features(teacher.backbone(), x, layer);
        const Tensor zc = train::extract_block_features(*set.ckn, x, layer);
        rep.bounds.push_back(
            {seed, "dv_heldout_batch", loss::dv_lower_bound(models::critic_score(set.critic, zt, zc)).value, {}});
        const auto dv = set.log.series("dv");
        if (!dv.empty()) {
          const std::size_t tail = std::max<std::size_t>(1, dv.size() / 10);
          double s = 0.0;
          for (std::size_t i = dv.size() - tail; i < dv.size(); ++i) s += dv[i];
          rep.bounds.push_back({seed, "dv_train_final", s / static_cast<double>(tail), {}});
        }
      }
    }

    rep.validate();
    report::save(dir / "report.json", rep);
    std::ofstream(dir / "report.jsonl") << report::to_json_lines(rep);
    report::save(report_path(root_), rep);
  }

  const config::ExperimentConfig& cfg_;
  RunOptions options_;
  fs::path root_;
  std::vector<std::uint64_t> seeds_;
  std::optional<LoadedData> data_;
};

}  // namespace

RunResult run(const config::ExperimentConfig& cfg, const RunOptions& options) { return Runner(cfg, options).run(); }

}  // namespace kf::pipeline
