#include "kfactor/assembly.hpp"

#include "kfactor/checkpoint.hpp"
#include "kfactor/digest.hpp"
#include "kfactor/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <limits>
#include <set>

namespace kf::assembly {

using nlohmann::json;

std::string HubEntry::digest() const {
  Sha256 h;
  h.update(tsn->params().digest());
  h.update(head->params().digest());
  h.update(aux_head->params().digest());
  return h.hex();
}

FactorHub::FactorHub(std::shared_ptr<models::Backbone> ckn, std::string teacher_digest, std::string config_json)
    : ckn_(std::move(ckn)), teacher_digest_(std::move(teacher_digest)), config_json_(std::move(config_json)) {
  if (!ckn_) throw InvalidArgument("hub: null CKN");
  ckn_digest_ = ckn_->params().digest();
}

bool FactorHub::register_factor(const models::FactorNetwork& factor) {
  if (!factor.ckn || !factor.tsn || !factor.head || !factor.aux_head) throw InvalidArgument("hub: incomplete factor network");
  const std::string digest = factor.ckn->params().digest();
  if (digest != ckn_digest_) {
    throw IncompatibleFactor("hub: factor for task " + std::to_string(factor.task_id) +
                             " was built on a different CKN (" + digest.substr(0, 12) + " vs " +
                             ckn_digest_.substr(0, 12) + ")");
  }
  if (factor.tsn->spec().feature_dim() != ckn_->spec().feature_dim()) {
    throw IncompatibleFactor("hub: TSN feature width does not match the CKN");
  }
  const bool fresh = !contains(factor.task_id);
  if (!fresh) std::cerr << "warning: hub entry for task " << factor.task_id << " replaced\n";
  entries_[factor.task_id] = HubEntry{factor.task_id, factor.tsn, factor.head, factor.aux_head, digest};
  return fresh;
}

const HubEntry& FactorHub::lookup(int task_id) const {
  const auto it = entries_.find(task_id);
  if (it == entries_.end()) throw NotFound("hub: no factor registered for task " + std::to_string(task_id));
  return it->second;
}

std::vector<int> FactorHub::task_ids() const {
  std::vector<int> ids;
  for (const auto& [id, entry] : entries_) ids.push_back(id);
  return ids;
}

std::size_t CompositeModel::parameter_count() const {
  std::size_t total = ckn->parameter_count();
  for (const auto& m : members) total += m.tsn->parameter_count() + m.head->parameter_count();
  return total;
}

CompositeModel assemble(const FactorHub& hub, const std::vector<int>& task_ids) {
  std::set<int> seen;
  CompositeModel out{hub.ckn(), {}};
  for (int id : task_ids) {
    if (!seen.insert(id).second) throw InvalidArgument("assemble: task " + std::to_string(id) + " requested twice");
    out.members.push_back(hub.lookup(id));
  }
  return out;
}

CompositePrediction predict_composite(const CompositeModel& composite, const Tensor& batch, PredictMode mode) {
  if (composite.members.empty()) throw InvalidArgument("predict: empty composite");
  const Tensor z = models::forward_ckn(*composite.ckn, batch);
  CompositePrediction out;
  for (const auto& m : composite.members) {
    out.per_task.push_back(models::forward_head(*m.head, z, models::forward_tsn(*m.tsn, batch)));
  }
  if (mode == PredictMode::merged_argmax) {
    const std::size_t n = batch.dim(0);
    out.merged_task.resize(n);
    out.merged_class.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < out.per_task.size(); ++k) {
        const Tensor& logits = out.per_task[k];
        for (std::size_t c = 0; c < logits.dim(1); ++c) {
          if (logits.at(i, c) > best) {
            best = logits.at(i, c);
            out.merged_task[i] = composite.members[k].task_id;
            out.merged_class[i] = static_cast<int>(c);
          }
        }
      }
    }
    out.per_task.clear();
  }
  return out;
}

void save_hub(const std::filesystem::path& dir, const FactorHub& hub) {
  std::filesystem::create_directories(dir);
  ckpt::save_checkpoint(dir / "ckn.kfckpt", ckpt::make_backbone_checkpoint(*hub.ckn(), {"ckn", 0, 0, "{}"}));
  json tasks = json::array();
  for (int id : hub.task_ids()) {
    const auto& e = hub.lookup(id);
    ckpt::Checkpoint c;
    c.metadata = json{{"kind", "factor"}, {"task_id", id}, {"ckn_digest", e.ckn_digest}}.dump();
    ckpt::add_backbone(c, "tsn", *e.tsn);
    ckpt::add_head(c, "head", *e.head);
    ckpt::add_head(c, "aux_head", *e.aux_head);
    const std::string file = "task_" + std::to_string(id) + ".kfckpt";
    ckpt::save_checkpoint(dir / file, c);
    tasks.push_back({{"task_id", id},
                     {"file", file},
                     {"digest", e.digest()},
                     {"ckn_digest", e.ckn_digest},
                     {"num_classes", e.head->out_dim()}});
  }
  const json manifest{{"format", "kfactor-hub/1"},
                      {"ckn_digest", hub.ckn_digest()},
                      {"teacher_digest", hub.teacher_digest()},
                      {"config", json::parse(hub.config_json())},
                      {"tasks", tasks}};
  std::ofstream(dir / "manifest.json") << manifest.dump(1) << '\n';
}

FactorHub load_hub(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw NotFound("hub manifest not found in '" + dir.string() + "'");
  const json manifest = json::parse(in);
  auto ckn = std::make_shared<models::Backbone>(ckpt::backbone_from_checkpoint(ckpt::load_checkpoint(dir / "ckn.kfckpt")));
  FactorHub hub(ckn, manifest.at("teacher_digest").get<std::string>(), manifest.at("config").dump());
  if (hub.ckn_digest() != manifest.at("ckn_digest").get<std::string>()) {
    throw IncompatibleFactor("hub: CKN checkpoint does not match the manifest digest");
  }
  for (const auto& t : manifest.at("tasks")) {
    const auto c = ckpt::load_checkpoint(dir / t.at("file").get<std::string>());
    models::FactorNetwork f{t.at("task_id").get<int>(), ckn,
                            std::make_shared<models::Backbone>(ckpt::backbone_from_checkpoint(c, "tsn")),
                            std::make_shared<models::TaskHead>(ckpt::head_from_checkpoint(c, "head")),
                            std::make_shared<models::TaskHead>(ckpt::head_from_checkpoint(c, "aux_head"))};
    if (json::parse(c.metadata).at("ckn_digest").get<std::string>() != hub.ckn_digest()) {
      throw IncompatibleFactor("hub: task file " + t.at("file").get<std::string>() + " targets another CKN");
    }
    hub.register_factor(f);
    if (hub.lookup(f.task_id).digest() != t.at("digest").get<std::string>()) {
      throw IncompatibleFactor("hub: task " + std::to_string(f.task_id) + " digest mismatch");
    }
  }
  return hub;
}

}  // namespace kf::assembly
