#include "kfactor/checkpoint.hpp"

#include "kfactor/digest.hpp"
#include "kfactor/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace kf::ckpt {

using nlohmann::json;

namespace {

constexpr char kTensorMagic[8] = {'K', 'F', 'T', 'E', 'N', 'S', 'R', '1'};
constexpr char kCheckpointMagic[8] = {'K', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw InvalidArgument("checkpoint: truncated stream");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1ULL << 32)) throw InvalidArgument("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw InvalidArgument("checkpoint: truncated string");
  return s;
}

void write_tensor_body(std::ostream& out, const Tensor& t) {
  write_u64(out, t.rank());
  for (std::size_t d : t.shape()) write_u64(out, d);
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor_body(std::istream& in) {
  const std::uint64_t rank = read_u64(in);
  if (rank > 16) throw InvalidArgument("tensor file: implausible rank");
  Shape shape(rank);
  for (auto& d : shape) d = read_u64(in);
  Tensor t(shape);
  if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
    throw InvalidArgument("tensor file: truncated payload");
  }
  return t;
}

void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw InvalidArgument(std::string(what) + ": bad magic header");
  }
}

json metadata_json(const Checkpoint& c) {
  if (c.metadata.empty()) return json::object();
  return json::parse(c.metadata);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic, 8);
  write_tensor_body(out, t);
}

Tensor read_tensor(std::istream& in) {
  expect_magic(in, kTensorMagic, "tensor file");
  return read_tensor_body(in);
}

void save_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  write_tensor(out, t);
  if (!out) throw InvalidArgument("failed writing '" + path.string() + "'");
}

Tensor load_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("tensor file '" + path.string() + "' not found");
  return read_tensor(in);
}

void Checkpoint::add(const std::string& prefix, const nn::ParameterSet& params) {
  for (const auto& p : params.items()) tensors.emplace_back(prefix + "/" + p.name, p.value);
}

nn::ParameterSet Checkpoint::extract(const std::string& prefix) const {
  nn::ParameterSet out;
  const std::string lead = prefix + "/";
  for (const auto& [name, t] : tensors) {
    if (name.rfind(lead, 0) == 0) out.add(name.substr(lead.size()), t);
  }
  if (out.size() == 0) throw NotFound("checkpoint: no tensors under '" + prefix + "'");
  return out;
}

std::string Checkpoint::digest() const {
  Sha256 h;
  h.update(metadata);
  for (const auto& [name, t] : tensors) {
    h.update(name);
    h.update(shape_string(t.shape()));
    h.update(t.values());
  }
  return h.hex();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  out.write(kCheckpointMagic, 8);
  write_string(out, ckpt.metadata);
  write_u64(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(out, name);
    write_tensor_body(out, t);
  }
  if (!out) throw InvalidArgument("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("checkpoint '" + path.string() + "' not found");
  expect_magic(in, kCheckpointMagic, "checkpoint");
  Checkpoint c;
  c.metadata = read_string(in);
  const std::uint64_t n = read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    c.tensors.emplace_back(std::move(name), read_tensor_body(in));
  }
  return c;
}

namespace {

Checkpoint with_metadata(const ModelMetadata& meta) {
  json j{{"kind", meta.kind}, {"seed", meta.seed}, {"step", meta.step}, {"extra", json::parse(meta.extra_json)}};
  Checkpoint c;
  c.metadata = j.dump();
  return c;
}

}  // namespace

ModelMetadata read_metadata(const Checkpoint& ckpt) {
  const json j = metadata_json(ckpt);
  ModelMetadata m;
  m.kind = j.value("kind", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.step = j.value("step", std::uint64_t{0});
  m.extra_json = j.contains("extra") ? j["extra"].dump() : "{}";
  return m;
}

void add_backbone(Checkpoint& ckpt, const std::string& prefix, const models::Backbone& backbone) {
  json j = metadata_json(ckpt);
  j["backbones"][prefix] = json::parse(models::to_json(backbone.spec()));
  ckpt.metadata = j.dump();
  ckpt.add(prefix, backbone.params());
}

models::Backbone backbone_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  const json j = metadata_json(ckpt);
  if (!j.contains("backbones") || !j["backbones"].contains(prefix)) {
    throw NotFound("checkpoint: no backbone spec under '" + prefix + "'");
  }
  auto spec = models::backbone_spec_from_json(j["backbones"][prefix].dump());
  return models::Backbone(std::move(spec), ckpt.extract(prefix));
}

void add_head(Checkpoint& ckpt, const std::string& prefix, const models::TaskHead& head) {
  json j = metadata_json(ckpt);
  j["heads"][prefix] = {{"in", head.in_dim()}, {"hidden", head.hidden()}, {"out", head.out_dim()}};
  ckpt.metadata = j.dump();
  ckpt.add(prefix, head.params());
}

models::TaskHead head_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  const json j = metadata_json(ckpt);
  if (!j.contains("heads") || !j["heads"].contains(prefix)) {
    throw NotFound("checkpoint: no head shape under '" + prefix + "'");
  }
  const auto& h = j["heads"][prefix];
  return models::TaskHead(h.at("in").get<std::size_t>(), h.at("hidden").get<std::vector<std::size_t>>(),
                          h.at("out").get<std::size_t>(), ckpt.extract(prefix));
}

Checkpoint make_backbone_checkpoint(const models::Backbone& backbone, const ModelMetadata& meta) {
  Checkpoint c = with_metadata(meta);
  add_backbone(c, "backbone", backbone);
  return c;
}

Checkpoint make_multihead_checkpoint(const models::MultiHeadNet& net, const ModelMetadata& meta) {
  Checkpoint c = with_metadata(meta);
  add_backbone(c, "backbone", net.backbone());
  json j = metadata_json(c);
  j["num_heads"] = net.num_tasks();
  c.metadata = j.dump();
  for (std::size_t t = 0; t < net.num_tasks(); ++t) add_head(c, "head" + std::to_string(t), net.heads()[t]);
  return c;
}

models::MultiHeadNet multihead_from_checkpoint(const Checkpoint& ckpt) {
  const json j = metadata_json(ckpt);
  const auto n = j.value("num_heads", std::size_t{0});
  if (n == 0) throw InvalidArgument("checkpoint: not a multi-head model");
  std::vector<models::TaskHead> heads;
  for (std::size_t t = 0; t < n; ++t) heads.push_back(head_from_checkpoint(ckpt, "head" + std::to_string(t)));
  return models::MultiHeadNet(backbone_from_checkpoint(ckpt, "backbone"), std::move(heads));
}

}  // namespace kf::ckpt
