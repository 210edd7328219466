#pragma once

// Binary tensor files and single-file checkpoint archives.
//
// Tensor file:   "KFTENSR1" | u64 rank | u64 dims[rank] | f64 values[]
// Checkpoint:    "KFCKPT01" | u64 metadata bytes | metadata (JSON text)
//                | u64 tensor count | per tensor: u64 name bytes | name | tensor body
// All integers and floats are stored little-endian; values are written raw so a
// save/load round trip is bit-exact.

#include "kfactor/models.hpp"
#include "kfactor/nn.hpp"
#include "kfactor/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace kf::ckpt {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor_file(const std::filesystem::path& path);

struct Checkpoint {
  std::string metadata;  // JSON document
  std::vector<std::pair<std::string, Tensor>> tensors;

  /// Stores every parameter of `params` under "<prefix>/<name>".
  void add(const std::string& prefix, const nn::ParameterSet& params);
  /// Parameters stored under `prefix`, in insertion order.
  nn::ParameterSet extract(const std::string& prefix) const;

  /// SHA-256 over metadata and tensors.
  std::string digest() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Metadata document: {"kind", "spec", "seed", "step", ...extra}.
struct ModelMetadata {
  std::string kind;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string extra_json = "{}";  // free-form object merged into the document
};

Checkpoint make_backbone_checkpoint(const models::Backbone& backbone, const ModelMetadata& meta);
models::Backbone backbone_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix = "backbone");

Checkpoint make_multihead_checkpoint(const models::MultiHeadNet& net, const ModelMetadata& meta);
models::MultiHeadNet multihead_from_checkpoint(const Checkpoint& ckpt);

/// Backbone specs and head shapes are recorded in the metadata document
/// under "backbones"/"heads", keyed by prefix.
void add_backbone(Checkpoint& ckpt, const std::string& prefix, const models::Backbone& backbone);
void add_head(Checkpoint& ckpt, const std::string& prefix, const models::TaskHead& head);
models::TaskHead head_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix);

ModelMetadata read_metadata(const Checkpoint& ckpt);

}  // namespace kf::ckpt
