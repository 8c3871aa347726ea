#include "rockgpt/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "rockgpt/bytes.hpp"
#include "rockgpt/common.hpp"

namespace rockgpt {

namespace {

constexpr char kMagic[9] = "RGPT0001";
constexpr size_t kHeaderLen = 8 + 4 + 8;

}  // namespace

uint64_t CheckpointData::stage1_checksum() const {
  if (!extra.contains("stage1_checksum"))
    throw IoError("stage-2 checkpoint is missing its stage-1 reference");
  return extra.at("stage1_checksum").get<uint64_t>();
}

uint64_t save_checkpoint(const std::string& path, const CheckpointData& data) {
  if (data.kind != "vqvae" && data.kind != "cgpt")
    throw ConfigError("checkpoint kind must be vqvae or cgpt, got '" + data.kind + "'");

  nlohmann::json meta;
  meta["kind"] = data.kind;
  meta["config"] = data.config;
  meta["extra"] = data.extra;
  auto table = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : data.tensors.items) {
    nlohmann::json row;
    row["name"] = name;
    row["shape"] = t.shape();
    row["offset"] = offset;
    table.push_back(row);
    offset += static_cast<uint64_t>(t.numel()) * 4;
  }
  meta["tensors"] = table;
  std::string meta_str = meta.dump();

  std::vector<uint8_t> bytes;
  bytes.reserve(kHeaderLen + meta_str.size() + offset + 8);
  put_bytes(bytes, kMagic, 8);
  put_u32(bytes, kCheckpointVersion);
  put_u64(bytes, static_cast<uint64_t>(meta_str.size()));
  put_bytes(bytes, meta_str.data(), meta_str.size());
  for (const auto& [name, t] : data.tensors.items) {
    const real* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) put_f32(bytes, p[static_cast<size_t>(i)]);
  }
  uint64_t checksum = fnv1a64(bytes.data(), bytes.size());
  put_u64(bytes, checksum);
  write_file_atomic(path, bytes);
  return checksum;
}

CheckpointData load_checkpoint(const std::string& path) {
  auto bytes = read_file_bytes(path, "checkpoint");
  if (bytes.size() < kHeaderLen + 8) throw IoError("truncated checkpoint: " + path);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);

  ByteReader header(bytes.data() + 8, bytes.size() - 8, "checkpoint");
  uint32_t version = header.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  uint64_t meta_len = header.u64();
  if (kHeaderLen + meta_len + 8 > bytes.size())
    throw IoError("truncated checkpoint: " + path);

  // integrity first: nothing inside the file is trusted before this passes
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  uint64_t actual = fnv1a64(bytes.data(), bytes.size() - 8);
  if (stored != actual) throw IoError("checkpoint checksum mismatch: " + path);

  CheckpointData data;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + kHeaderLen,
                                 bytes.begin() + kHeaderLen + static_cast<size_t>(meta_len));
    data.kind = meta.at("kind").get<std::string>();
    data.config = meta.at("config");
    data.extra = meta.value("extra", nlohmann::json::object());

    const uint8_t* payload = bytes.data() + kHeaderLen + meta_len;
    size_t payload_len = bytes.size() - kHeaderLen - static_cast<size_t>(meta_len) - 8;
    for (const auto& row : meta.at("tensors")) {
      std::string name = row.at("name").get<std::string>();
      Shape shape = row.at("shape").get<Shape>();
      uint64_t offset = row.at("offset").get<uint64_t>();
      int64_t n = numel(shape);
      if (n < 0 || static_cast<uint64_t>(n) > payload_len / 4 ||
          offset > payload_len - static_cast<uint64_t>(n) * 4)
        throw IoError("checkpoint tensor '" + name + "' overruns the payload: " + path);
      RTensor t = RTensor::zeros(shape);
      ByteReader vals(payload + offset, static_cast<size_t>(n) * 4, "checkpoint");
      real* out = t.data();
      for (int64_t i = 0; i < n; ++i) out[i] = vals.f32();
      data.tensors.add(name, t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint metadata in " + path + ": " + e.what());
  }

  if (data.kind != "vqvae" && data.kind != "cgpt")
    throw IoError("unknown checkpoint kind '" + data.kind + "': " + path);
  if (data.kind == "cgpt" && !data.extra.contains("stage1_checksum"))
    throw IoError("stage-2 checkpoint is missing its stage-1 reference: " + path);
  return data;
}

uint64_t checkpoint_checksum(const std::string& path) {
  auto bytes = read_file_bytes(path, "checkpoint");
  if (bytes.size() < kHeaderLen + 8) throw IoError("truncated checkpoint: " + path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(bytes[bytes.size() - 8 + static_cast<size_t>(i)]) << (8 * i);
  return v;
}

VqVae vqvae_from_checkpoint(const CheckpointData& data) {
  if (data.kind != "vqvae") throw IoError("expected a stage-1 checkpoint, got " + data.kind);
  VqVaeConfig cfg = vqvae_config_from_json(data.config);
  Rng scratch(0);
  VqVae model = VqVae::make(cfg, scratch);
  NamedTensors params, buffers;
  model.collect("vqvae", params, buffers);
  load_named(data.tensors, params);
  load_named(data.tensors, buffers);
  return model;
}

LoadedCgpt cgpt_from_checkpoint(const CheckpointData& data) {
  if (data.kind != "cgpt") throw IoError("expected a stage-2 checkpoint, got " + data.kind);
  data.stage1_checksum();  // dependency must be recorded
  if (!data.extra.contains("vqvae_config"))
    throw IoError("stage-2 checkpoint has no embedded stage-1 config");
  GptConfig gpt_cfg = gpt_config_from_json(data.config);
  VqVaeConfig vq_cfg = vqvae_config_from_json(data.extra.at("vqvae_config"));
  Rng scratch(0);
  LoadedCgpt out{gpt_cfg, vq_cfg, CondGpt::make(gpt_cfg, scratch), VqVae::make(vq_cfg, scratch)};
  NamedTensors gp, gb, vp, vb;
  out.gpt.collect("gpt.", gp, gb);
  out.vqvae.collect("vqvae", vp, vb);
  load_named(data.tensors, gp);
  load_named(data.tensors, gb);
  load_named(data.tensors, vp);
  load_named(data.tensors, vb);
  return out;
}

void load_named(const NamedTensors& loaded, NamedTensors& target) {
  for (auto& [name, t] : target.items) {
    const RTensor* src = loaded.find(name);
    if (!src) throw IoError("checkpoint is missing tensor '" + name + "'");
    if (src->shape() != t.shape())
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_str(src->shape()) +
                    ", expected " + shape_str(t.shape()));
    std::copy(src->data(), src->data() + t.numel(), t.data());
  }
}

nlohmann::json vqvae_config_json(const VqVaeConfig& cfg) {
  nlohmann::json j;
  j["in_channels"] = cfg.in_channels;
  j["width"] = cfg.width;
  j["res_hidden"] = cfg.res_hidden;
  j["res_blocks"] = cfg.res_blocks;
  j["downsample"] = cfg.downsample;
  j["codebook_size"] = cfg.codebook_size;
  j["code_dim"] = cfg.code_dim;
  j["beta"] = static_cast<double>(cfg.beta);
  return j;
}

VqVaeConfig vqvae_config_from_json(const nlohmann::json& j) {
  VqVaeConfig cfg;
  try {
    cfg.in_channels = j.at("in_channels").get<int64_t>();
    cfg.width = j.at("width").get<int64_t>();
    cfg.res_hidden = j.at("res_hidden").get<int64_t>();
    cfg.res_blocks = j.at("res_blocks").get<int64_t>();
    cfg.downsample = j.at("downsample").get<Triple>();
    cfg.codebook_size = j.at("codebook_size").get<int64_t>();
    cfg.code_dim = j.at("code_dim").get<int64_t>();
    cfg.beta = static_cast<real>(j.at("beta").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad vqvae config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json gpt_config_json(const GptConfig& cfg) {
  nlohmann::json j;
  j["blocks"] = cfg.blocks;
  j["d_model"] = cfg.d_model;
  j["heads"] = cfg.heads;
  j["mlp_mult"] = cfg.mlp_mult;
  j["vocab"] = cfg.vocab;
  j["code_dim"] = cfg.code_dim;
  j["max_seq"] = cfg.max_seq;
  j["num_classes"] = cfg.num_classes;
  j["cond_base"] = cfg.cond_base;
  j["dropout"] = static_cast<double>(cfg.dropout);
  j["conditional"] = cfg.conditional;
  return j;
}

GptConfig gpt_config_from_json(const nlohmann::json& j) {
  GptConfig cfg;
  try {
    cfg.blocks = j.at("blocks").get<int64_t>();
    cfg.d_model = j.at("d_model").get<int64_t>();
    cfg.heads = j.at("heads").get<int64_t>();
    cfg.mlp_mult = j.at("mlp_mult").get<int64_t>();
    cfg.vocab = j.at("vocab").get<int64_t>();
    cfg.code_dim = j.at("code_dim").get<int64_t>();
    cfg.max_seq = j.at("max_seq").get<int64_t>();
    cfg.num_classes = j.at("num_classes").get<int64_t>();
    cfg.cond_base = j.at("cond_base").get<int64_t>();
    cfg.dropout = static_cast<real>(j.at("dropout").get<double>());
    cfg.conditional = j.at("conditional").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad gpt config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace rockgpt
