#pragma once

// two-stage training: the discrete autoencoder first, then the conditional
// transformer over its frozen codes. both stages checkpoint atomically,
// resume with optimizer state intact, and log one loss row per iteration.

#include <cstdint>
#include <string>
#include <vector>

#include "rockgpt/checkpoint.hpp"
#include "rockgpt/manifest.hpp"

namespace rockgpt {

struct TrainConfig {
  int64_t iterations = 100;  // absolute target; resumed runs continue toward it
  int64_t batch = 8;
  real lr = real(3e-4);
  uint64_t seed = 0;
  int64_t log_every = 10;         // console cadence, csv rows are per iteration
  int64_t checkpoint_every = 0;   // rolling saves; 0 keeps only the final one
  real stop_loss = 0;             // early stop once loss < stop_loss; 0 disables
  std::string out_dir;
  std::string resume_from;

  void validate() const;
};

struct TrainResult {
  std::string checkpoint_path;
  uint64_t checksum = 0;
  int64_t iterations_run = 0;   // absolute iteration count at the end
  std::vector<double> curve;    // loss per iteration over this run's span
};

// all extraction windows of all manifest volumes, flattened to floats
struct SequenceSet {
  int64_t l = 0, h = 0, w = 0;
  std::vector<std::vector<real>> seqs;
  std::vector<int64_t> labels;
};
SequenceSet load_sequences(const DatasetManifest& manifest);

// one transformer training example: frozen-codebook token ids, the first
// slice as conditioning, and the sequence's class and measured porosity
struct Stage2Example {
  std::vector<int32_t> tokens;
  std::vector<real> cond_slice;  // h*w
  int64_t label = 0;
  double porosity = 0;
};
std::vector<Stage2Example> build_stage2_examples(VqVae& vq, const SequenceSet& data);

TrainResult train_stage1(const DatasetManifest& manifest, const VqVaeConfig& mcfg,
                         const TrainConfig& tcfg);
TrainResult train_stage2(const DatasetManifest& manifest, const std::string& stage1_path,
                         const GptConfig& gcfg, const TrainConfig& tcfg);

}  // namespace rockgpt
