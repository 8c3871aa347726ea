#include "rockgpt/generation.hpp"

#include <cstring>

#include "rockgpt/common.hpp"

namespace rockgpt {

std::vector<VoxelVolume> extract_sequences(const VoxelVolume& v, int64_t l, int64_t stride) {
  v.validate();
  if (l < 2) throw ConfigError("extraction: window length must be at least 2");
  if (stride < 1) throw ConfigError("extraction: stride must be at least 1");
  if (v.d < l)
    throw ConfigError("extraction: first-axis extent " + std::to_string(v.d) +
                      " is smaller than the window length " + std::to_string(l));
  int64_t count = (v.d - l) / stride + 1;
  std::vector<VoxelVolume> out;
  out.reserve(static_cast<size_t>(count));
  int64_t slice_n = v.h * v.w;
  for (int64_t s = 0; s < count; ++s) {
    VoxelVolume win = make_volume(l, v.h, v.w, v.voxel_um);
    std::memcpy(win.values.data(), v.values.data() + s * stride * slice_n,
                static_cast<size_t>(l * slice_n));
    out.push_back(std::move(win));
  }
  return out;
}

CondBatch make_cond_batch(const ConditionSpec& cond, int64_t num_classes) {
  if (cond.h < 1 || cond.w < 1) throw ConfigError("condition: slice extents must be positive");
  if (static_cast<int64_t>(cond.slice.size()) != cond.h * cond.w)
    throw ConfigError("condition: slice has " + std::to_string(cond.slice.size()) +
                      " values, expected " + std::to_string(cond.h * cond.w));
  if (cond.label < 0 || cond.label >= num_classes)
    throw ConfigError("condition: label " + std::to_string(cond.label) + " outside " +
                      std::to_string(num_classes) + " classes");
  if (!(cond.porosity >= 0.0 && cond.porosity <= 1.0))
    throw ConfigError("condition: porosity must lie in [0,1]");
  CondBatch cb;
  cb.slice = RTensor::from({1, 1, 1, cond.h, cond.w}, cond.slice);
  cb.class_onehot = RTensor::zeros({1, num_classes});
  cb.class_onehot.data()[cond.label] = real(1);
  cb.porosity = RTensor::from({1, 1}, {static_cast<real>(cond.porosity)});
  return cb;
}

VoxelVolume generate_chunk(VqVae& vq, CondGpt& gpt, const ConditionSpec& cond, int64_t l,
                           const SampleSettings& st, Rng& rng, double voxel_um) {
  if (l < 2) throw ConfigError("generate: chunk length must be at least 2");
  CondBatch cb = make_cond_batch(cond, gpt.cfg.num_classes);
  Triple grid = vq.latent_grid({l, cond.h, cond.w});
  int64_t length = grid[0] * grid[1] * grid[2];

  auto ids = gpt.sample_tokens(&cb, length, st, rng);

  RContext ctx{nullptr, false, &rng};
  RTensor z_q = vq.lookup(ctx, ids, 1, grid);
  RTensor x_hat = vq.decode(ctx, z_q);
  check(x_hat.shape() == Shape{1, 1, l, cond.h, cond.w}, "generate: decoder shape mismatch");

  VoxelVolume out = make_volume(l, cond.h, cond.w, voxel_um);
  const real* p = x_hat.data();
  for (int64_t i = 0; i < out.size(); ++i)
    out.values[static_cast<size_t>(i)] = p[i] >= real(0.5) ? 1 : 0;
  // the decoder is not guaranteed to reproduce the conditioning, so the
  // chunk's slice 0 is the given slice verbatim
  for (int64_t i = 0; i < cond.h * cond.w; ++i)
    out.values[static_cast<size_t>(i)] = cond.slice[static_cast<size_t>(i)] >= real(0.5) ? 1 : 0;
  return out;
}

VoxelVolume stack_volume(VqVae& vq, CondGpt& gpt, const ConditionSpec& cond, int64_t l,
                         int64_t n_iters, const SampleSettings& st, uint64_t seed,
                         double voxel_um) {
  if (n_iters < 1) throw ConfigError("stack: n_iters must be at least 1");
  if (l < 2) throw ConfigError("stack: chunk length must be at least 2");
  int64_t total = l + (n_iters - 1) * (l - 1);
  VoxelVolume out = make_volume(total, cond.h, cond.w, voxel_um);
  int64_t slice_n = cond.h * cond.w;

  ConditionSpec cur = cond;
  int64_t at = 0;
  for (int64_t c = 0; c < n_iters; ++c) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(c)));
    VoxelVolume chunk = generate_chunk(vq, gpt, cur, l, st, rng, voxel_um);
    int64_t from = c == 0 ? 0 : 1;  // later chunks repeat the conditional slice
    std::memcpy(out.values.data() + at * slice_n,
                chunk.values.data() + from * slice_n,
                static_cast<size_t>((l - from) * slice_n));
    at += l - from;
    cur.slice.assign(chunk.values.end() - slice_n, chunk.values.end());
  }
  check(at == total, "stack: assembled length mismatch");
  return out;
}

}  // namespace rockgpt
