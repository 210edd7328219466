#pragma once

// Model hub: a pool of factor networks sharing one CKN, from which composite
// multi-task models are assembled without retraining.
//
// On disk a hub is a directory holding ckn.kfckpt, one task_<id>.kfckpt per
// registered factor and manifest.json with digests and task metadata.

#include "kfactor/models.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace kf::assembly {

struct HubEntry {
  int task_id = 0;
  std::shared_ptr<models::Backbone> tsn;
  std::shared_ptr<models::TaskHead> head;
  std::shared_ptr<models::TaskHead> aux_head;
  std::string ckn_digest;  // CKN the entry was trained against

  /// Digest over the entry's own parameters (TSN, head, aux head).
  std::string digest() const;
};

class FactorHub {
 public:
  explicit FactorHub(std::shared_ptr<models::Backbone> ckn, std::string teacher_digest = {},
                     std::string config_json = "{}");

  /// Adds `factor`; its CKN must have the hub's digest. Returns false if an
  /// existing entry for the same task was replaced.
  bool register_factor(const models::FactorNetwork& factor);

  const HubEntry& lookup(int task_id) const;
  bool contains(int task_id) const { return entries_.count(task_id) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<int> task_ids() const;

  const std::shared_ptr<models::Backbone>& ckn() const noexcept { return ckn_; }
  const std::string& ckn_digest() const noexcept { return ckn_digest_; }
  const std::string& teacher_digest() const noexcept { return teacher_digest_; }
  const std::string& config_json() const noexcept { return config_json_; }

 private:
  std::shared_ptr<models::Backbone> ckn_;
  std::string ckn_digest_;
  std::string teacher_digest_;
  std::string config_json_;
  std::map<int, HubEntry> entries_;
};

struct CompositeModel {
  std::shared_ptr<const models::Backbone> ckn;
  std::vector<HubEntry> members;  // in requested order

  std::size_t parameter_count() const;
};

/// Composite of the CKN and the requested tasks' branches; parameters are shared, never copied.
CompositeModel assemble(const FactorHub& hub, const std::vector<int>& task_ids);

enum class PredictMode { per_task, merged_argmax };

struct CompositePrediction {
  std::vector<Tensor> per_task;  // per_task mode: one logit tensor per member
  std::vector<int> merged_task;  // merged_argmax mode: winning member's task id per sample
  std::vector<int> merged_class; // and its class index within that task
};

/// Runs the CKN once per batch and each member's TSN and head once.
CompositePrediction predict_composite(const CompositeModel& composite, const Tensor& batch, PredictMode mode);

void save_hub(const std::filesystem::path& dir, const FactorHub& hub);
FactorHub load_hub(const std::filesystem::path& dir);

}  // namespace kf::assembly
