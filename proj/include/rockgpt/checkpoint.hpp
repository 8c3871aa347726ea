#pragma once

// checkpoint persistence. file layout: magic "RGPT0001", little-endian u32
// format version, little-endian u64 metadata length, UTF-8 JSON metadata
// (kind, config, extra, tensor table of name/shape/offset), tensor payloads
// as little-endian f32 in table order, then a u64 FNV-1a checksum of every
// prior byte. the checksum is verified before the metadata is parsed, so a
// corrupted file is rejected without a partial load.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "rockgpt/gpt.hpp"
#include "rockgpt/nn.hpp"
#include "rockgpt/vqvae.hpp"

namespace rockgpt {

constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::string kind;       // "vqvae" or "cgpt"
  nlohmann::json config;  // model config snapshot
  nlohmann::json extra;   // iteration counters, optimizer step, lineage
  NamedTensors tensors;

  // stage-2 files must carry the checksum of the stage-1 file they embed
  uint64_t stage1_checksum() const;
};

// writes atomically (temp + rename) and returns the file checksum
uint64_t save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// copies loaded values into an existing table by name; a missing name or a
// shape mismatch is an error
void load_named(const NamedTensors& loaded, NamedTensors& target);

// the checksum stored at the tail of an existing checkpoint file
uint64_t checkpoint_checksum(const std::string& path);

// rebuilds an eval-ready autoencoder from a stage-1 file
VqVae vqvae_from_checkpoint(const CheckpointData& data);

// rebuilds the transformer plus the frozen autoencoder embedded in a
// stage-2 file, wired together and eval-ready
struct LoadedCgpt {
  GptConfig gpt_cfg;
  VqVaeConfig vq_cfg;
  CondGpt gpt;
  VqVae vqvae;
};
LoadedCgpt cgpt_from_checkpoint(const CheckpointData& data);

nlohmann::json vqvae_config_json(const VqVaeConfig& cfg);
VqVaeConfig vqvae_config_from_json(const nlohmann::json& j);
nlohmann::json gpt_config_json(const GptConfig& cfg);
GptConfig gpt_config_from_json(const nlohmann::json& j);

}  // namespace rockgpt
