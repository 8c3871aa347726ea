// voxel.hpp: binary voxel volumes and the .rvox container.
// a volume is pore (1) / solid (0) bytes with extents (d,h,w), w fastest,
// plus the physical voxel edge length in micrometers.
#pragma once

#include <string>
#include <vector>

#include "rockgpt/common.hpp"

namespace rockgpt {

struct VoxelVolume {
  int64_t d = 0, h = 0, w = 0;
  double voxel_um = 1.0;
  std::vector<uint8_t> values;  // 1 = pore, 0 = solid

  int64_t size() const { return d * h * w; }
  uint8_t at(int64_t i, int64_t j, int64_t k) const { return values[(i * h + j) * w + k]; }
  uint8_t& at(int64_t i, int64_t j, int64_t k) { return values[(i * h + j) * w + k]; }
  int64_t extent(int axis) const { return axis == 0 ? d : (axis == 1 ? h : w); }

  // extents positive, edge length positive and finite, values strictly 0/1
  void validate() const;
};

VoxelVolume make_volume(int64_t d, int64_t h, int64_t w, double voxel_um);

// .rvox: "RVOX0001", u32 d,h,w, f64 edge length (um), then d*h*w bytes.
// all integers and floats little-endian. load rejects anything malformed:
// wrong magic, short or oversized payload, non-binary bytes, bad edge length.
void save_rvox(const std::string& path, const VoxelVolume& v);
VoxelVolume load_rvox(const std::string& path);

}  // namespace rockgpt
