// synthdata.hpp: deterministic synthetic porous media. white noise smoothed
// by a separable periodic Gaussian, then rank-thresholded so the achieved
// porosity is exactly round(phi*N)/N. the correlation length of the result
// tracks the smoothing scale, which is what the class labels condition on.
#pragma once

#include <array>

#include "rockgpt/manifest.hpp"
#include "rockgpt/rng.hpp"
#include "rockgpt/voxel.hpp"

namespace rockgpt {

struct SynthSpec {
  int64_t d = 0, h = 0, w = 0;
  std::array<double, 3> sigma{1, 1, 1};  // voxels, per axis
  double phi_target = 0.3;
  uint64_t seed = 0;
  double voxel_um = 1.0;

  void validate() const;  // sigma > 0, phi in (0,1), extents >= 4*sigma
};

struct SynthClassSpec {
  std::string name;
  std::array<double, 3> sigma{1, 1, 1};
  double phi_lo = 0.15, phi_hi = 0.40;
  double voxel_um = 1.0;
};

// standardized smoothed noise (zero mean, unit variance). sigma 0 on an axis
// degenerates to the identity kernel. kernel radius ceil(4*sigma), periodic.
std::vector<double> gaussian_field(int64_t d, int64_t h, int64_t w,
                                   const std::array<double, 3>& sigma, Rng& rng);

// pore = the top round(phi*N) values; ties broken by raster order
VoxelVolume threshold_to_porosity(const std::vector<double>& field, int64_t d, int64_t h,
                                  int64_t w, double phi_target, double voxel_um);

// the two above glued behind one per-volume seed
VoxelVolume synth_volume(const SynthSpec& spec);

// writes per_class volumes per class plus manifest.json under out_dir.
// volume k of class c is seeded with derive_seed(master, (c << 32) + k),
// so any file can be regenerated in isolation.
DatasetManifest make_dataset(const std::vector<SynthClassSpec>& classes, int64_t per_class,
                             const std::array<int64_t, 3>& extents, int64_t l, int64_t stride,
                             uint64_t master_seed, const std::string& out_dir);

}  // namespace rockgpt
