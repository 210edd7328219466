#include "kfactor/config.hpp"

#include "kfactor/digest.hpp"
#include "kfactor/error.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace kf::config {

train::StudentSpecs FactorizationSection::students() const {
  return {ckn, ckn.narrowed(tsn_width), critic_hidden};
}

// ---------------------------------------------------------------------------
// Validation

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name", "must not be empty");
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

  const auto& d = dataset;
  if (d.import_path.empty()) {
    try {
      d.spec.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError("dataset.factors", e.what());
    }
    if (d.subsample && *d.subsample > d.spec.grid_size()) {
      throw ConfigError("dataset.subsample", "exceeds the grid size " + std::to_string(d.spec.grid_size()));
    }
    if (d.subsample && *d.subsample < 4) throw ConfigError("dataset.subsample", "must be >= 4");
  }
  if (!(d.split_ratio > 0.0 && d.split_ratio < 1.0)) throw ConfigError("dataset.split_ratio", "must lie in (0, 1)");

  const auto check_backbone = [](const models::BackboneSpec& spec, const std::string& path) {
    try {
      spec.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(path, e.what());
    }
  };
  check_backbone(teacher.backbone, "teacher.backbone");
  teacher.train.validate("teacher.train");

  const auto& f = factorization;
  f.objective.validate();
  check_backbone(f.ckn, "factorization.ckn");
  if (!(f.tsn_width > 0.0 && f.tsn_width <= 1.0)) throw ConfigError("factorization.tsn_width", "must lie in (0, 1]");
  check_backbone(f.ckn.narrowed(f.tsn_width), "factorization.tsn_width");
  const int blocks = static_cast<int>(std::min(f.ckn.num_blocks(), teacher.backbone.num_blocks()));
  if (f.objective.critic_layer >= blocks) {
    throw ConfigError("factorization.critic_layer", "must be < " + std::to_string(blocks) + " or negative");
  }
  if (!f.objective.task_types.empty() && d.import_path.empty() && f.objective.task_types.size() != d.spec.num_factors()) {
    throw ConfigError("factorization.task_types", "must list one type per factor");
  }
  f.train.validate("factorization.train");

  check_backbone(baselines.backbone, "baselines.backbone");
  baselines.train.validate("baselines.train");

  const auto& e = evaluation;
  if (e.seeds.empty()) throw ConfigError("evaluation.seeds", "must list at least one seed");
  if (std::set<std::uint64_t>(e.seeds.begin(), e.seeds.end()).size() != e.seeds.size()) {
    throw ConfigError("evaluation.seeds", "must not repeat");
  }
  if (e.bins < 2) throw ConfigError("evaluation.bins", "must be >= 2");
  if (e.factor_vae_votes < 1) throw ConfigError("evaluation.factor_vae_votes", "must be >= 1");
  if (e.factor_vae_batch < 2) throw ConfigError("evaluation.factor_vae_batch", "must be >= 2");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

/// Cursor over a YAML mapping that remembers its dotted path and rejects unknown keys.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a mapping");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    used_.insert(key);
    return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
  }
  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    return node_ && node_.IsMap() ? node_[key] : YAML::Node();
  }
  Section child(const std::string& key) { return Section(raw(key), field(key)); }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  void reject_unknown() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

template <class F>
auto convert(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

std::vector<double> factor_values(Section& s) {
  std::vector<double> values;
  if (s.has("values")) {
    s.get("values", values);
    return values;
  }
  if (s.has("linspace")) {
    std::vector<double> a;
    s.get("linspace", a);
    if (a.size() != 3 || a[2] < 2) throw ConfigError(s.field("linspace"), "expected [start, stop, count >= 2]");
    const auto n = static_cast<std::size_t>(a[2]);
    for (std::size_t i = 0; i < n; ++i) values.push_back(a[0] + (a[1] - a[0]) * static_cast<double>(i) / static_cast<double>(n - 1));
    return values;
  }
  if (s.has("periodic")) {
    std::vector<double> a;
    s.get("periodic", a);
    if (a.size() != 2 || a[1] < 2) throw ConfigError(s.field("periodic"), "expected [period, count >= 2]");
    const auto n = static_cast<std::size_t>(a[1]);
    for (std::size_t i = 0; i < n; ++i) values.push_back(a[0] * static_cast<double>(i) / static_cast<double>(n));
    return values;
  }
  throw ConfigError(s.field("values"), "each factor needs values, linspace or periodic");
}

DatasetSection parse_dataset(Section s) {
  DatasetSection d;
  std::string preset;
  s.get("preset", preset);
  if (preset == "dsprites") d.spec = synth::LatentFactorSpec::dsprites();
  else if (preset == "shapes3d") d.spec = synth::LatentFactorSpec::shapes3d();
  else if (!preset.empty()) throw ConfigError(s.field("preset"), "unknown preset '" + preset + "'");

  std::string scene = synth::to_string(d.spec.scene);
  s.get("scene", scene);
  d.spec.scene = convert(s.field("scene"), [&] { return synth::scene_kind_from_string(scene); });
  s.get("height", d.spec.height);
  s.get("width", d.spec.width);
  s.get("channels", d.spec.channels);
  if (s.has("factors")) {
    const YAML::Node list = s.raw("factors");
    if (!list.IsSequence()) throw ConfigError(s.field("factors"), "expected a list");
    d.spec.factors.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section f(list[i], s.field("factors") + "[" + std::to_string(i) + "]");
      synth::LatentFactor factor;
      f.get("name", factor.name);
      factor.values = factor_values(f);
      f.reject_unknown();
      d.spec.factors.push_back(std::move(factor));
    }
  }
  if (s.has("subsample")) {
    std::size_t n = 0;
    s.get("subsample", n);
    d.subsample = n;
  }
  s.get("subsample_seed", d.subsample_seed);
  s.get("split_ratio", d.split_ratio);
  s.get("split_seed", d.split_seed);
  s.get("import_path", d.import_path);
  s.reject_unknown();
  return d;
}

models::BackboneSpec parse_backbone(Section s, const synth::LatentFactorSpec& data, models::BackboneSpec spec) {
  std::string kind = models::to_string(spec.kind);
  s.get("kind", kind);
  spec.kind = convert(s.field("kind"), [&] { return models::backbone_kind_from_string(kind); });
  if (!s.has("widths")) {
    if (spec.kind == models::BackboneKind::cnn6) spec.widths = {32, 32, 64, 128, 256, 256};
    else if (spec.kind == models::BackboneKind::cnn3) spec.widths = {32, 32, 64};
  }
  s.get("widths", spec.widths);
  spec.in_channels = data.channels;
  spec.in_height = data.height;
  spec.in_width = data.width;
  s.reject_unknown();
  return spec;
}

train::TrainConfig parse_train(Section s) {
  train::TrainConfig t;
  auto& o = t.optim;
  std::string kind = optim::to_string(o.kind), schedule = optim::to_string(o.schedule);
  s.get("optimizer", kind);
  o.kind = convert(s.field("optimizer"), [&] { return optim::optimizer_kind_from_string(kind); });
  s.get("lr", o.lr);
  s.get("momentum", o.momentum);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("eps", o.eps);
  s.get("weight_decay", o.weight_decay);
  s.get("schedule", schedule);
  o.schedule = convert(s.field("schedule"), [&] { return optim::schedule_kind_from_string(schedule); });
  s.get("step_size", o.step_size);
  s.get("gamma", o.gamma);
  s.get("poly_power", o.poly_power);
  s.get("clip_norm", o.clip_norm);
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("seed", t.seed);
  s.reject_unknown();
  return t;
}

loss::FactorizationConfig parse_objective(Section& s) {
  loss::FactorizationConfig c;
  s.get("alpha", c.alpha);
  s.get("beta", c.beta);
  s.get("lambda_I", c.lambda_I);
  s.get("lambda_kt", c.lambda_kt);
  s.get("temperature", c.temperature);
  s.get("critic_layer", c.critic_layer);
  if (s.has("task_types")) {
    std::vector<std::string> names;
    s.get("task_types", names);
    for (const auto& n : names) {
      c.task_types.push_back(convert(s.field("task_types"), [&] { return loss::task_type_from_string(n); }));
    }
  }
  return c;
}

ExperimentConfig parse_root(const YAML::Node& root) {
  Section s(root, "");
  ExperimentConfig cfg;
  s.get("name", cfg.name);
  s.get("output_dir", cfg.output_dir);
  cfg.dataset = parse_dataset(s.child("dataset"));
  const auto& data = cfg.dataset.spec;

  Section teacher = s.child("teacher");
  cfg.teacher.backbone = parse_backbone(teacher.child("backbone"), data, models::BackboneSpec::cnn6(1, 64, 64));
  cfg.teacher.train = parse_train(teacher.child("train"));
  teacher.reject_unknown();

  Section fact = s.child("factorization");
  cfg.factorization.objective = parse_objective(fact);
  cfg.factorization.ckn = parse_backbone(fact.child("ckn"), data, models::BackboneSpec::cnn3(1, 64, 64));
  fact.get("tsn_width", cfg.factorization.tsn_width);
  fact.get("critic_hidden", cfg.factorization.critic_hidden);
  cfg.factorization.train = parse_train(fact.child("train"));
  fact.reject_unknown();

  Section base = s.child("baselines");
  base.get("multitask", cfg.baselines.multitask);
  base.get("distilled", cfg.baselines.distilled);
  cfg.baselines.backbone = parse_backbone(base.child("backbone"), data, cfg.factorization.ckn);
  cfg.baselines.train = parse_train(base.child("train"));
  base.reject_unknown();

  Section ev = s.child("evaluation");
  ev.get("seeds", cfg.evaluation.seeds);
  ev.get("auc", cfg.evaluation.auc);
  ev.get("disentanglement", cfg.evaluation.disentanglement);
  ev.get("cka", cfg.evaluation.cka);
  ev.get("bins", cfg.evaluation.bins);
  ev.get("factor_vae_votes", cfg.evaluation.factor_vae_votes);
  ev.get("factor_vae_batch", cfg.evaluation.factor_vae_batch);
  ev.get("metric_seed", cfg.evaluation.metric_seed);
  ev.reject_unknown();

  s.reject_unknown();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Emission

void emit_backbone(YAML::Emitter& out, const char* key, const models::BackboneSpec& spec) {
  out << YAML::Key << key << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << models::to_string(spec.kind);
  out << YAML::Key << "widths" << YAML::Value << YAML::Flow << spec.widths;
  out << YAML::EndMap;
}

void emit_train(YAML::Emitter& out, const train::TrainConfig& t) {
  const auto& o = t.optim;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "optimizer" << YAML::Value << optim::to_string(o.kind);
  out << YAML::Key << "lr" << YAML::Value << o.lr;
  out << YAML::Key << "momentum" << YAML::Value << o.momentum;
  out << YAML::Key << "beta1" << YAML::Value << o.beta1;
  out << YAML::Key << "beta2" << YAML::Value << o.beta2;
  out << YAML::Key << "eps" << YAML::Value << o.eps;
  out << YAML::Key << "weight_decay" << YAML::Value << o.weight_decay;
  out << YAML::Key << "schedule" << YAML::Value << optim::to_string(o.schedule);
  out << YAML::Key << "step_size" << YAML::Value << o.step_size;
  out << YAML::Key << "gamma" << YAML::Value << o.gamma;
  out << YAML::Key << "poly_power" << YAML::Value << o.poly_power;
  out << YAML::Key << "clip_norm" << YAML::Value << o.clip_norm;
  out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  out << YAML::Key << "epochs" << YAML::Value << t.epochs;
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::EndMap;
}

void emit_dataset(YAML::Emitter& out, const DatasetSection& d) {
  out << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "scene" << YAML::Value << synth::to_string(d.spec.scene);
  out << YAML::Key << "height" << YAML::Value << d.spec.height;
  out << YAML::Key << "width" << YAML::Value << d.spec.width;
  out << YAML::Key << "channels" << YAML::Value << d.spec.channels;
  out << YAML::Key << "factors" << YAML::Value << YAML::BeginSeq;
  for (const auto& f : d.spec.factors) {
    out << YAML::BeginMap << YAML::Key << "name" << YAML::Value << f.name;
    out << YAML::Key << "values" << YAML::Value << YAML::Flow << f.values << YAML::EndMap;
  }
  out << YAML::EndSeq;
  if (d.subsample) out << YAML::Key << "subsample" << YAML::Value << *d.subsample;
  out << YAML::Key << "subsample_seed" << YAML::Value << d.subsample_seed;
  out << YAML::Key << "split_ratio" << YAML::Value << d.split_ratio;
  out << YAML::Key << "split_seed" << YAML::Value << d.split_seed;
  if (!d.import_path.empty()) out << YAML::Key << "import_path" << YAML::Value << d.import_path;
  out << YAML::EndMap;
}

void emit_teacher(YAML::Emitter& out, const TeacherSection& t) {
  out << YAML::Key << "teacher" << YAML::Value << YAML::BeginMap;
  emit_backbone(out, "backbone", t.backbone);
  emit_train(out, t.train);
  out << YAML::EndMap;
}

void emit_factorization(YAML::Emitter& out, const FactorizationSection& f) {
  const auto& c = f.objective;
  out << YAML::Key << "factorization" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "alpha" << YAML::Value << c.alpha;
  out << YAML::Key << "beta" << YAML::Value << c.beta;
  out << YAML::Key << "lambda_I" << YAML::Value << c.lambda_I;
  out << YAML::Key << "lambda_kt" << YAML::Value << c.lambda_kt;
  out << YAML::Key << "temperature" << YAML::Value << c.temperature;
  out << YAML::Key << "critic_layer" << YAML::Value << c.critic_layer;
  if (!c.task_types.empty()) {
    std::vector<std::string> names;
    for (auto t : c.task_types) names.push_back(loss::to_string(t));
    out << YAML::Key << "task_types" << YAML::Value << YAML::Flow << names;
  }
  emit_backbone(out, "ckn", f.ckn);
  out << YAML::Key << "tsn_width" << YAML::Value << f.tsn_width;
  out << YAML::Key << "critic_hidden" << YAML::Value << YAML::Flow << f.critic_hidden;
  emit_train(out, f.train);
  out << YAML::EndMap;
}

void emit_baselines(YAML::Emitter& out, const BaselineSection& b) {
  out << YAML::Key << "baselines" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "multitask" << YAML::Value << b.multitask;
  out << YAML::Key << "distilled" << YAML::Value << b.distilled;
  emit_backbone(out, "backbone", b.backbone);
  emit_train(out, b.train);
  out << YAML::EndMap;
}

void emit_evaluation(YAML::Emitter& out, const EvaluationSection& e) {
  out << YAML::Key << "evaluation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << e.seeds;
  out << YAML::Key << "auc" << YAML::Value << e.auc;
  out << YAML::Key << "disentanglement" << YAML::Value << e.disentanglement;
  out << YAML::Key << "cka" << YAML::Value << e.cka;
  out << YAML::Key << "bins" << YAML::Value << e.bins;
  out << YAML::Key << "factor_vae_votes" << YAML::Value << e.factor_vae_votes;
  out << YAML::Key << "factor_vae_batch" << YAML::Value << e.factor_vae_batch;
  out << YAML::Key << "metric_seed" << YAML::Value << e.metric_seed;
  out << YAML::EndMap;
}

void set_precision(YAML::Emitter& out) { out.SetDoublePrecision(std::numeric_limits<double>::max_digits10); }

}  // namespace

ExperimentConfig parse_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("<root>", std::string("YAML syntax: ") + e.what());
  }
  return parse_root(root);
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("config '" + path.string() + "' not found");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_yaml(buf.str());
}

std::string to_yaml(const ExperimentConfig& cfg) {
  YAML::Emitter out;
  set_precision(out);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.name;
  out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir;
  emit_dataset(out, cfg.dataset);
  emit_teacher(out, cfg.teacher);
  emit_factorization(out, cfg.factorization);
  emit_baselines(out, cfg.baselines);
  emit_evaluation(out, cfg.evaluation);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string digest(const ExperimentConfig& cfg) {
  // The output directory is where results go, not what they are.
  ExperimentConfig canonical = cfg;
  canonical.output_dir = "-";
  return sha256_hex(to_yaml(canonical));
}

std::string section_digest(const ExperimentConfig& cfg, const std::string& section) {
  YAML::Emitter out;
  set_precision(out);
  out << YAML::BeginMap;
  if (section == "dataset") emit_dataset(out, cfg.dataset);
  else if (section == "teacher") emit_teacher(out, cfg.teacher);
  else if (section == "factorization") emit_factorization(out, cfg.factorization);
  else if (section == "baselines") emit_baselines(out, cfg.baselines);
  else if (section == "evaluation") emit_evaluation(out, cfg.evaluation);
  else throw InvalidArgument("unknown config section '" + section + "'");
  out << YAML::EndMap;
  return sha256_hex(out.c_str());
}

}  // namespace kf::config
