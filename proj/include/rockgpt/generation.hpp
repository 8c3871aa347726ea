#pragma once

// volume assembly: slice-window extraction from training volumes, and
// autoregressive generation of binary chunks that stack into volumes of
// length l + (n_iters - 1) * (l - 1) along the first axis.

#include "rockgpt/gpt.hpp"
#include "rockgpt/rng.hpp"
#include "rockgpt/voxel.hpp"
#include "rockgpt/vqvae.hpp"

namespace rockgpt {

// windows [0..l), [stride..stride+l), ...; count = floor((d - l)/stride) + 1
std::vector<VoxelVolume> extract_sequences(const VoxelVolume& v, int64_t l, int64_t stride);

struct ConditionSpec {
  std::vector<real> slice;  // row-major h*w, values in {0,1}
  int64_t h = 0, w = 0;
  int64_t label = 0;
  double porosity = 0.3;
};

CondBatch make_cond_batch(const ConditionSpec& cond, int64_t num_classes);

// sample tokens for one chunk, decode through the frozen autoencoder,
// binarize at 0.5 (0.5 itself is pore), then force slice 0 to equal the
// conditional slice exactly
VoxelVolume generate_chunk(VqVae& vq, CondGpt& gpt, const ConditionSpec& cond, int64_t l,
                           const SampleSettings& st, Rng& rng, double voxel_um);

// chunks are chained: each next chunk is conditioned on the last slice of
// the previous one, and its repeated slice 0 is dropped when stacking.
// class and porosity labels stay fixed across iterations. chunk c draws
// from an rng seeded with derive_seed(seed, c).
VoxelVolume stack_volume(VqVae& vq, CondGpt& gpt, const ConditionSpec& cond, int64_t l,
                         int64_t n_iters, const SampleSettings& st, uint64_t seed,
                         double voxel_um);

}  // namespace rockgpt
