#include "kfactor/trainer.hpp"

#include "kfactor/checkpoint.hpp"
#include "kfactor/error.hpp"
#include "kfactor/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace kf::train {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configs

void TrainConfig::validate(const std::string& section) const {
  if (!(optim.lr > 0.0)) throw ConfigError(section + ".lr", "must be > 0");
  if (!(optim.weight_decay >= 0.0)) throw ConfigError(section + ".weight_decay", "must be >= 0");
  if (!(optim.momentum >= 0.0 && optim.momentum < 1.0)) throw ConfigError(section + ".momentum", "must be in [0, 1)");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) throw ConfigError(section + ".beta1", "must be in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) throw ConfigError(section + ".beta2", "must be in [0, 1)");
  if (optim.schedule == optim::ScheduleKind::step && optim.step_size == 0) {
    throw ConfigError(section + ".step_size", "must be > 0 for the step schedule");
  }
  if (batch_size < 2) throw ConfigError(section + ".batch_size", "must be >= 2");
}

namespace {

json train_json(const TrainConfig& c) {
  return {{"optimizer", optim::to_string(c.optim.kind)},
          {"lr", c.optim.lr},
          {"momentum", c.optim.momentum},
          {"beta1", c.optim.beta1},
          {"beta2", c.optim.beta2},
          {"eps", c.optim.eps},
          {"weight_decay", c.optim.weight_decay},
          {"schedule", optim::to_string(c.optim.schedule)},
          {"step_size", c.optim.step_size},
          {"gamma", c.optim.gamma},
          {"poly_power", c.optim.poly_power},
          {"clip_norm", c.optim.clip_norm},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  c.optim.kind = optim::optimizer_kind_from_string(j.at("optimizer").get<std::string>());
  c.optim.lr = j.at("lr").get<double>();
  c.optim.momentum = j.at("momentum").get<double>();
  c.optim.beta1 = j.at("beta1").get<double>();
  c.optim.beta2 = j.at("beta2").get<double>();
  c.optim.eps = j.at("eps").get<double>();
  c.optim.weight_decay = j.at("weight_decay").get<double>();
  c.optim.schedule = optim::schedule_kind_from_string(j.at("schedule").get<std::string>());
  c.optim.step_size = j.at("step_size").get<std::size_t>();
  c.optim.gamma = j.at("gamma").get<double>();
  c.optim.poly_power = j.at("poly_power").get<double>();
  c.optim.clip_norm = j.at("clip_norm").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json factorization_json(const loss::FactorizationConfig& c) {
  json types = json::array();
  for (auto t : c.task_types) types.push_back(loss::to_string(t));
  return {{"alpha", c.alpha},         {"beta", c.beta},
          {"lambda_I", c.lambda_I},   {"lambda_kt", c.lambda_kt},
          {"temperature", c.temperature}, {"critic_layer", c.critic_layer},
          {"task_types", types}};
}

loss::FactorizationConfig factorization_from(const json& j) {
  loss::FactorizationConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.lambda_I = j.at("lambda_I").get<double>();
  c.lambda_kt = j.at("lambda_kt").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.critic_layer = j.at("critic_layer").get<int>();
  for (const auto& t : j.at("task_types")) c.task_types.push_back(loss::task_type_from_string(t.get<std::string>()));
  return c;
}

template <class F>
auto parse_json(const std::string& text, const char* what, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string to_json(const TrainConfig& cfg) { return train_json(cfg).dump(); }
TrainConfig train_config_from_json(const std::string& text) { return parse_json(text, "train config", train_from); }
std::string to_json(const loss::FactorizationConfig& cfg) { return factorization_json(cfg).dump(); }
loss::FactorizationConfig factorization_config_from_json(const std::string& text) {
  return parse_json(text, "factorization config", factorization_from);
}

// ---------------------------------------------------------------------------
// Log

std::vector<std::string> TrainingLog::series_names() const {
  std::vector<std::string> names;
  for (const auto& r : records_)
    if (std::find(names.begin(), names.end(), r.name) == names.end()) names.push_back(r.name);
  return names;
}

std::vector<double> TrainingLog::series(const std::string& name) const {
  std::vector<double> out;
  for (const auto& r : records_)
    if (r.name == name) out.push_back(r.value);
  return out;
}

void TrainingLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write log '" + path.string() + "'");
  for (const auto& r : records_) out << json{{"step", r.step}, {"name", r.name}, {"value", r.value}}.dump() << '\n';
}

TrainingLog TrainingLog::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("log '" + path.string() + "' not found");
  TrainingLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    log.add(j.at("step").get<std::size_t>(), j.at("name").get<std::string>(), j.at("value").get<double>());
  }
  return log;
}

// ---------------------------------------------------------------------------
// Shared training machinery

namespace {

constexpr std::uint64_t kShuffleSalt = 0x5DEECE66DULL;

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  const std::size_t full = n / batch;
  return full + (n % batch >= 2 ? 1 : 0);
}

/// Shuffled mini-batches for every epoch; batches smaller than 2 are dropped.
template <class StepFn>
void for_each_batch(std::size_t n, const TrainConfig& cfg, StepFn&& step_fn) {
  std::mt19937_64 rng(cfg.seed ^ kShuffleSalt);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      if (end - begin < 2) break;
      step_fn(step++, std::span<const std::size_t>(order.data() + begin, end - begin));
    }
  }
}

void check_finite(double v, const std::string& component, std::size_t step) {
  if (!std::isfinite(v)) throw TrainingFailure(component, step);
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), m.dim(1)});
  for (std::size_t i = 0; i < rows.size(); ++i) out.matrix().row(static_cast<Eigen::Index>(i)) = m.matrix().row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<Tensor> teacher_logits(const models::MultiHeadNet& teacher, const Tensor& images) {
  std::vector<Tensor> out(teacher.num_tasks());
  const Tensor features = extract_features(teacher.backbone(), images);
  for (std::size_t j = 0; j < teacher.num_tasks(); ++j) out[j] = teacher.heads()[j].forward(features);
  return out;
}

std::string task_series(const char* stem, std::size_t j) { return std::string(stem) + "/" + std::to_string(j); }

}  // namespace

Tensor map_chunks(const Tensor& images, std::size_t chunk, const std::function<Tensor(const Tensor&)>& fn) {
  const std::size_t n = images.dim(0);
  if (n == 0) throw InvalidArgument("map_chunks: empty input");
  Tensor out;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const Tensor part = fn(images.slice_rows(begin, end));
    if (begin == 0) {
      Shape s = part.shape();
      s[0] = n;
      out = Tensor(s);
    }
    std::copy(part.data(), part.data() + part.size(), out.data() + begin * out.row_stride());
  }
  return out;
}

Tensor extract_features(const models::Backbone& backbone, const Tensor& images, std::size_t chunk) {
  return map_chunks(images, chunk, [&](const Tensor& x) { return backbone.forward(x); });
}

Tensor extract_block_features(const models::Backbone& backbone, const Tensor& images, int block, std::size_t chunk) {
  if (block < 0) return extract_features(backbone, images, chunk);
  return map_chunks(images, chunk, [&](const Tensor& x) {
    models::Trace trace;
    backbone.forward(x, &trace);
    return backbone.block_feature(trace, block);
  });
}

// ---------------------------------------------------------------------------
// Teacher and baselines

models::MultiHeadNet pretrain_teacher(const data::TaskDataset& train, const models::BackboneSpec& spec,
                                      const TrainConfig& cfg, TrainingLog* log) {
  cfg.validate();
  if (train.num_tasks() == 0) throw InvalidArgument("pretrain: dataset has no tasks");
  models::MultiHeadNet net(spec, train.num_classes(), cfg.seed);
  optim::Optimizer opt(cfg.optim, net.parameter_sets(), cfg.epochs * steps_per_epoch(train.size(), cfg.batch_size));
  const std::size_t k = net.num_tasks();

  for_each_batch(train.size(), cfg, [&](std::size_t step, std::span<const std::size_t> rows) {
    const Tensor x = train.gather(rows);
    opt.zero_grad();
    models::Trace trunk;
    const Tensor features = net.backbone().forward(x, &trunk);
    Tensor d_features(features.shape());
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      models::Trace head_trace;
      const Tensor logits = net.heads()[j].forward(features, &head_trace);
      const auto labels = train.task_labels(j, rows);
      const auto sup = loss::cross_entropy(logits, labels);
      check_finite(sup.value, task_series("sup", j), step);
      d_features += net.heads()[j].backward(head_trace, sup.grad);
      total += sup.value;
      if (log) log->add(step, task_series("sup", j), sup.value);
    }
    if (log) log->add(step, "total", total);
    net.backbone().backward(trunk, d_features);
    check_finite(opt.step(), "grad_norm", step);
  });
  return net;
}

models::MultiHeadNet train_single_task(const data::TaskDataset& train, const models::BackboneSpec& spec,
                                       std::size_t task, const models::MultiHeadNet* teacher, double lambda_kt,
                                       double temperature, const TrainConfig& cfg, TrainingLog* log) {
  cfg.validate();
  if (task >= train.num_tasks()) throw InvalidArgument("single-task student: task out of range");
  if (lambda_kt > 0.0 && !teacher) throw InvalidArgument("single-task student: distillation needs a teacher");
  models::MultiHeadNet net(spec, {train.num_classes()[task]}, cfg.seed);
  optim::Optimizer opt(cfg.optim, net.parameter_sets(), cfg.epochs * steps_per_epoch(train.size(), cfg.batch_size));
  Tensor soft_targets;
  if (lambda_kt > 0.0) soft_targets = teacher_logits(*teacher, train.images())[task];

  for_each_batch(train.size(), cfg, [&](std::size_t step, std::span<const std::size_t> rows) {
    const Tensor x = train.gather(rows);
    opt.zero_grad();
    models::Trace trunk, head_trace;
    const Tensor features = net.backbone().forward(x, &trunk);
    const Tensor logits = net.heads()[0].forward(features, &head_trace);
    auto sup = loss::cross_entropy(logits, train.task_labels(task, rows));
    check_finite(sup.value, "sup", step);
    double total = sup.value;
    if (lambda_kt > 0.0) {
      const auto kt = loss::soft_target_kd(gather_rows(soft_targets, rows), logits, temperature);
      check_finite(kt.value, "kt", step);
      total += lambda_kt * kt.value;
      sup.grad.matrix() += lambda_kt * kt.grad.matrix();
      if (log) log->add(step, "kt", kt.value);
    }
    if (log) {
      log->add(step, "sup", sup.value);
      log->add(step, "total", total);
    }
    net.backbone().backward(trunk, net.heads()[0].backward(head_trace, sup.grad));
    check_finite(opt.step(), "grad_norm", step);
  });
  return net;
}

// ---------------------------------------------------------------------------
// Factorization

FactorSet factorize(const models::MultiHeadNet& teacher, const data::TaskDataset& train,
                    const loss::FactorizationConfig& config, const StudentSpecs& students, const TrainConfig& cfg) {
  cfg.validate();
  config.validate();
  const std::size_t k = train.num_tasks();
  if (teacher.num_tasks() != k) throw InvalidArgument("factorize: teacher heads do not cover the dataset tasks");
  for (std::size_t j = 0; j < k; ++j) {
    if (teacher.heads()[j].out_dim() != train.num_classes()[j]) {
      throw InvalidArgument("factorize: teacher head " + std::to_string(j) + " has the wrong class count");
    }
  }
  if (!config.task_types.empty() && config.task_types.size() != k) {
    throw InvalidArgument("factorize: task_types must list every task");
  }
  if (students.ckn.feature_dim() != students.tsn.feature_dim()) {
    throw InvalidArgument("factorize: CKN and TSN feature dimensions must match for additive fusion");
  }
  const auto task_type = [&](std::size_t j) {
    return config.task_types.empty() ? loss::TaskType::classification : config.task_types[j];
  };

  FactorSet set{.ckn = std::make_shared<models::Backbone>(students.ckn, cfg.seed),
                .factors = {},
                .critic = models::CriticAligner::make(teacher.backbone().spec().block_feature_dim(config.critic_layer),
                                                      students.ckn.block_feature_dim(config.critic_layer),
                                                      students.critic_hidden, config.critic_layer, cfg.seed + 7),
                .config = config,
                .train_config = cfg,
                .teacher_digest = teacher.digest(),
                .log = {}};
  const std::size_t d = students.ckn.feature_dim();
  for (std::size_t j = 0; j < k; ++j) {
    const std::uint64_t s = cfg.seed + 1009ULL * (j + 1);
    const std::size_t out = task_type(j) == loss::TaskType::classification ? train.num_classes()[j] : 1;
    set.factors.push_back({static_cast<int>(j), set.ckn, std::make_shared<models::Backbone>(students.tsn, s + 1),
                           std::make_shared<models::TaskHead>(d, std::vector<std::size_t>{}, out, s + 2),
                           std::make_shared<models::TaskHead>(d, std::vector<std::size_t>{}, out, s + 3)});
  }

  std::vector<nn::ParameterSet*> params{&set.ckn->params(), &set.critic.ffn.params()};
  for (auto& f : set.factors) {
    params.push_back(&f.tsn->params());
    params.push_back(&f.head->params());
    params.push_back(&f.aux_head->params());
  }
  optim::Optimizer opt(cfg.optim, params, cfg.epochs * steps_per_epoch(train.size(), cfg.batch_size));

  // The teacher is frozen: its logits and critic features are computed once.
  const std::vector<Tensor> soft_targets = teacher_logits(teacher, train.images());
  const Tensor teacher_features = extract_block_features(teacher.backbone(), train.images(), config.critic_layer);

  const double kd = static_cast<double>(k);
  for_each_batch(train.size(), cfg, [&](std::size_t step, std::span<const std::size_t> rows) {
    const Tensor x = train.gather(rows);
    opt.zero_grad();
    TrainingLog& log = set.log;

    models::Trace ckn_trace;
    const Tensor z = set.ckn->forward(x, &ckn_trace);
    Tensor d_z(z.shape());

    std::vector<double> structural(k), imb(k);
    // Term 2 depends only on the CKN, so it is evaluated once and shared by every task's L_I.
    const Tensor z_critic = set.ckn->block_feature(ckn_trace, config.critic_layer);
    const Tensor t_critic = gather_rows(teacher_features, rows);
    const auto dv = loss::dv_lower_bound(models::critic_score(set.critic, t_critic, z_critic));
    check_finite(dv.value, "dv", step);

    for (std::size_t j = 0; j < k; ++j) {
      auto& f = set.factors[j];
      const auto labels = train.task_labels(j, rows);
      models::Trace tsn_trace, head_trace, aux_trace;
      const Tensor t = f.tsn->forward(x, &tsn_trace);
      const Tensor fused = f.head->forward(z + t, &head_trace);
      const Tensor aux = f.aux_head->forward(t, &aux_trace);

      auto sup = loss::supervised_loss(fused, labels, task_type(j));
      check_finite(sup.value, task_series("sup", j), step);
      loss::LossValue kt{0.0, Tensor(fused.shape())};
      if (task_type(j) == loss::TaskType::classification) {
        kt = loss::soft_target_kd(gather_rows(soft_targets[j], rows), fused, config.temperature);
      }
      check_finite(kt.value, task_series("kt", j), step);
      const auto aux_loss = loss::supervised_loss(aux, labels, task_type(j));
      check_finite(aux_loss.value, task_series("aux", j), step);
      const auto kl = loss::feature_kl(t);
      check_finite(kl.value, task_series("kl", j), step);

      structural[j] = loss::structural_loss(sup.value, kt.value, config);
      imb[j] = loss::imb_loss(aux_loss.value, dv.value, kl.value, config);

      // d(total)/d(fused) and the IMB terms' gradients w.r.t. t (total = ... - lambda_I * L_I).
      sup.grad.matrix() += config.lambda_kt * kt.grad.matrix();
      const Tensor d_sum = f.head->backward(head_trace, sup.grad);
      Tensor aux_grad = aux_loss.grad;
      aux_grad *= config.lambda_I;
      Tensor d_t = f.aux_head->backward(aux_trace, aux_grad);
      d_t.matrix() += config.lambda_I * config.beta * kl.grad.matrix();
      d_t += d_sum;
      d_z += d_sum;
      f.tsn->backward(tsn_trace, d_t);

      log.add(step, task_series("sup", j), sup.value);
      log.add(step, task_series("kt", j), kt.value);
      log.add(step, task_series("aux", j), aux_loss.value);
      log.add(step, task_series("kl", j), kl.value);
    }
    log.add(step, "dv", dv.value);
    const double total = loss::total_objective(structural, imb, config);
    check_finite(total, "total", step);
    log.add(step, "total", total);

    Tensor d_scores = dv.grad;
    d_scores *= -config.lambda_I * config.alpha * kd;
    const auto critic_grads = models::critic_score_backward(set.critic, t_critic, z_critic, d_scores);
    std::vector<models::BlockGradient> extra;
    if (config.critic_layer < 0) {
      d_z += critic_grads.d_ckn_features;
    } else {
      extra.push_back({config.critic_layer, critic_grads.d_ckn_features});
    }
    set.ckn->backward(ckn_trace, d_z, extra);
    check_finite(opt.step(), "grad_norm", step);
  });
  return set;
}

// ---------------------------------------------------------------------------
// Persistence

void save_factor_set(const std::filesystem::path& dir, const FactorSet& set) {
  std::filesystem::create_directories(dir);
  const std::string ckn_digest = set.ckn_digest();
  ckpt::save_checkpoint(dir / "ckn.kfckpt",
                        ckpt::make_backbone_checkpoint(*set.ckn, {"ckn", set.train_config.seed, 0, "{}"}));
  for (const auto& f : set.factors) {
    ckpt::Checkpoint c;
    c.metadata = json{{"kind", "factor"}, {"task_id", f.task_id}, {"ckn_digest", ckn_digest}}.dump();
    ckpt::add_backbone(c, "tsn", *f.tsn);
    ckpt::add_head(c, "head", *f.head);
    ckpt::add_head(c, "aux_head", *f.aux_head);
    ckpt::save_checkpoint(dir / ("factor_" + std::to_string(f.task_id) + ".kfckpt"), c);
  }
  ckpt::Checkpoint critic;
  critic.metadata = json{{"kind", "critic"}, {"layer_index", set.critic.layer_index}}.dump();
  ckpt::add_head(critic, "ffn", set.critic.ffn);
  ckpt::save_checkpoint(dir / "critic.kfckpt", critic);

  const json meta{{"factorization", factorization_json(set.config)},
                  {"train", train_json(set.train_config)},
                  {"teacher_digest", set.teacher_digest},
                  {"ckn_digest", ckn_digest},
                  {"num_tasks", set.factors.size()}};
  std::ofstream(dir / "factor_set.json") << meta.dump(1) << '\n';
  set.log.write_jsonl(dir / "log.jsonl");
}

FactorSet load_factor_set(const std::filesystem::path& dir) {
  std::ifstream in(dir / "factor_set.json");
  if (!in) throw NotFound("factor set not found in '" + dir.string() + "'");
  const json meta = json::parse(in);
  auto ckn = std::make_shared<models::Backbone>(ckpt::backbone_from_checkpoint(ckpt::load_checkpoint(dir / "ckn.kfckpt")));
  const auto critic_ckpt = ckpt::load_checkpoint(dir / "critic.kfckpt");
  FactorSet set{.ckn = ckn,
                .factors = {},
                .critic = {ckpt::head_from_checkpoint(critic_ckpt, "ffn"),
                           json::parse(critic_ckpt.metadata).at("layer_index").get<int>()},
                .config = factorization_from(meta.at("factorization")),
                .train_config = train_from(meta.at("train")),
                .teacher_digest = meta.at("teacher_digest").get<std::string>(),
                .log = TrainingLog::read_jsonl(dir / "log.jsonl")};
  const std::string digest = set.ckn_digest();
  if (digest != meta.at("ckn_digest").get<std::string>()) throw IncompatibleFactor("factor set: CKN digest mismatch");
  const auto k = meta.at("num_tasks").get<std::size_t>();
  for (std::size_t j = 0; j < k; ++j) {
    const auto c = ckpt::load_checkpoint(dir / ("factor_" + std::to_string(j) + ".kfckpt"));
    const json m = json::parse(c.metadata);
    if (m.at("ckn_digest").get<std::string>() != digest) {
      throw IncompatibleFactor("factor " + std::to_string(j) + " was trained against a different CKN");
    }
    set.factors.push_back({m.at("task_id").get<int>(), ckn,
                           std::make_shared<models::Backbone>(ckpt::backbone_from_checkpoint(c, "tsn")),
                           std::make_shared<models::TaskHead>(ckpt::head_from_checkpoint(c, "head")),
                           std::make_shared<models::TaskHead>(ckpt::head_from_checkpoint(c, "aux_head"))});
  }
  return set;
}

// ---------------------------------------------------------------------------
// Transfer

FinetuneResult finetune_ckn(const models::Backbone& ckn, const data::TaskDataset& train,
                            const data::TaskDataset& test, std::size_t task, const TrainConfig& cfg) {
  cfg.validate();
  if (task >= train.num_tasks()) throw InvalidArgument("finetune: task out of range");
  std::vector<models::TaskHead> heads;
  heads.emplace_back(ckn.spec().feature_dim(), std::vector<std::size_t>{}, train.num_classes()[task], cfg.seed + 11);
  models::MultiHeadNet net(models::Backbone(ckn), std::move(heads));
  optim::Optimizer opt(cfg.optim, net.parameter_sets(), cfg.epochs * steps_per_epoch(train.size(), cfg.batch_size));

  for_each_batch(train.size(), cfg, [&](std::size_t step, std::span<const std::size_t> rows) {
    const Tensor x = train.gather(rows);
    opt.zero_grad();
    models::Trace trunk, head_trace;
    const Tensor features = net.backbone().forward(x, &trunk);
    const Tensor logits = net.heads()[0].forward(features, &head_trace);
    const auto sup = loss::cross_entropy(logits, train.task_labels(task, rows));
    check_finite(sup.value, "sup", step);
    net.backbone().backward(trunk, net.heads()[0].backward(head_trace, sup.grad));
    check_finite(opt.step(), "grad_norm", step);
  });

  const Tensor features = extract_features(net.backbone(), test.images());
  const auto m = classification_metrics(net.heads()[0].forward(features), test.task_labels(task));
  return {std::move(net), m.accuracy};
}

// ---------------------------------------------------------------------------
// Evaluation

TaskMetrics classification_metrics(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) throw InvalidArgument("evaluate: logits do not match labels");
  if (labels.empty()) throw InvalidArgument("evaluate: empty test split");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  TaskMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    logits.matrix().row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    if (best == labels[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  std::vector<double> scores(n);
  std::vector<char> positive(n);
  double sum = 0.0;
  std::size_t defined = 0;
  m.class_auc.resize(c);
  for (std::size_t cls = 0; cls < c; ++cls) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = logits.at(i, cls);
      positive[i] = labels[i] == static_cast<int>(cls);
    }
    m.class_auc[cls] = metrics::binary_auc(scores, positive);
    if (m.class_auc[cls]) {
      sum += *m.class_auc[cls];
      ++defined;
    }
  }
  m.macro_auc = defined ? sum / static_cast<double>(defined) : std::nan("");
  return m;
}

std::vector<TaskMetrics> evaluate(const models::MultiHeadNet& model, const data::TaskDataset& test) {
  if (test.size() == 0) throw InvalidArgument("evaluate: empty test split");
  const Tensor features = extract_features(model.backbone(), test.images());
  std::vector<TaskMetrics> out;
  for (std::size_t j = 0; j < model.num_tasks(); ++j) {
    out.push_back(classification_metrics(model.heads()[j].forward(features), test.task_labels(j)));
  }
  return out;
}

std::vector<TaskMetrics> evaluate(const FactorSet& set, const data::TaskDataset& test) {
  if (test.size() == 0) throw InvalidArgument("evaluate: empty test split");
  const Tensor z = extract_features(*set.ckn, test.images());
  std::vector<TaskMetrics> out;
  for (const auto& f : set.factors) {
    const Tensor t = extract_features(*f.tsn, test.images());
    out.push_back(classification_metrics(models::forward_head(*f.head, z, t),
                                         test.task_labels(static_cast<std::size_t>(f.task_id))));
  }
  return out;
}

}  // namespace kf::train
