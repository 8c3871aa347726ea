#include "rockgpt/voxel.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "rockgpt/bytes.hpp"

namespace rockgpt {

namespace {
constexpr char kMagic[8] = {'R', 'V', 'O', 'X', '0', '0', '0', '1'};
// caps a single volume at 1G voxels; anything larger is a corrupt header here
constexpr int64_t kMaxVoxels = int64_t(1) << 30;
}  // namespace

void VoxelVolume::validate() const {
  if (d < 1 || h < 1 || w < 1)
    throw IoError("voxel volume: extents must be positive, got " + shape_str({d, h, w}));
  if (!(voxel_um > 0) || !std::isfinite(voxel_um))
    throw IoError("voxel volume: edge length must be positive and finite");
  if (static_cast<int64_t>(values.size()) != size())
    throw IoError("voxel volume: value count does not match extents");
  for (uint8_t v : values)
    if (v > 1) throw IoError("voxel volume: values must be 0 or 1");
}

VoxelVolume make_volume(int64_t d, int64_t h, int64_t w, double voxel_um) {
  VoxelVolume v;
  v.d = d;
  v.h = h;
  v.w = w;
  v.voxel_um = voxel_um;
  v.values.assign(static_cast<size_t>(d * h * w), 0);
  v.validate();
  return v;
}

std::vector<uint8_t> read_file_bytes(const std::string& path, const std::string& kind) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError(kind + ": cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(len < 0 ? 0 : len));
  size_t got = buf.empty() ? 0 : std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (got != buf.size()) throw IoError(kind + ": short read on " + path);
  return buf;
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("write: cannot open " + tmp);
  size_t put = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  bool flushed = std::fflush(f) == 0;
  std::fclose(f);
  if (put != bytes.size() || !flushed) {
    std::remove(tmp.c_str());
    throw IoError("write: short write on " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("write: cannot rename " + tmp + " to " + path);
  }
}

void save_rvox(const std::string& path, const VoxelVolume& v) {
  v.validate();
  std::vector<uint8_t> out;
  out.reserve(28 + v.values.size());
  put_bytes(out, kMagic, 8);
  put_u32(out, static_cast<uint32_t>(v.d));
  put_u32(out, static_cast<uint32_t>(v.h));
  put_u32(out, static_cast<uint32_t>(v.w));
  put_f64(out, v.voxel_um);
  put_bytes(out, v.values.data(), v.values.size());
  write_file_atomic(path, out);
}

VoxelVolume load_rvox(const std::string& path) {
  auto buf = read_file_bytes(path, "rvox");
  ByteReader r(buf, "rvox");
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("rvox: bad magic in " + path);
  VoxelVolume v;
  v.d = r.u32();
  v.h = r.u32();
  v.w = r.u32();
  v.voxel_um = r.f64();
  if (v.d < 1 || v.h < 1 || v.w < 1 || v.size() > kMaxVoxels)
    throw IoError("rvox: implausible extents in " + path);
  if (r.remaining() != static_cast<size_t>(v.size()))
    throw IoError("rvox: payload size mismatch in " + path);
  v.values.resize(static_cast<size_t>(v.size()));
  r.raw(v.values.data(), v.values.size());
  v.validate();
  return v;
}

}  // namespace rockgpt
