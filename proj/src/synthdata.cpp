#include "rockgpt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

namespace rockgpt {

void SynthSpec::validate() const {
  if (d < 1 || h < 1 || w < 1) throw ConfigError("synth: extents must be positive");
  if (!(phi_target > 0 && phi_target < 1)) throw ConfigError("synth: phi_target must be in (0,1)");
  if (!(voxel_um > 0)) throw ConfigError("synth: voxel edge must be positive");
  const int64_t ext[3] = {d, h, w};
  for (int a = 0; a < 3; ++a) {
    if (!(sigma[a] > 0)) throw ConfigError("synth: sigma must be > 0 per axis");
    if (static_cast<double>(ext[a]) < 4.0 * sigma[a])
      throw ShapeError("synth: extent " + std::to_string(ext[a]) +
                       " too small for sigma " + std::to_string(sigma[a]));
  }
}

namespace {

// periodic 1d convolution along one axis of a (d,h,w) array, in place
void smooth_axis(std::vector<double>& f, int64_t d, int64_t h, int64_t w, int axis, double sigma) {
  if (!(sigma >= 0)) throw ConfigError("synth: sigma must be >= 0");
  int64_t radius = static_cast<int64_t>(std::ceil(4.0 * sigma));
  if (radius == 0) return;
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int64_t t = -radius; t <= radius; ++t) {
    double x = static_cast<double>(t);
    kernel[t + radius] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += kernel[t + radius];
  }
  for (auto& k : kernel) k /= sum;

  int64_t extent = axis == 0 ? d : (axis == 1 ? h : w);
  int64_t step = axis == 0 ? h * w : (axis == 1 ? w : 1);
  check(radius < extent, "synth: kernel radius exceeds extent");
  std::vector<double> line(extent);
  // walk every 1d line along the axis
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < h; ++j)
      for (int64_t k = 0; k < w; ++k) {
        int64_t along = axis == 0 ? i : (axis == 1 ? j : k);
        if (along != 0) continue;  // each line once, from its origin
        int64_t base = (i * h + j) * w + k;
        for (int64_t t = 0; t < extent; ++t) {
          double acc = 0;
          for (int64_t u = -radius; u <= radius; ++u) {
            int64_t src = (t + u) % extent;
            if (src < 0) src += extent;
            acc += kernel[u + radius] * f[base + src * step];
          }
          line[t] = acc;
        }
        for (int64_t t = 0; t < extent; ++t) f[base + t * step] = line[t];
      }
}

}  // namespace

std::vector<double> gaussian_field(int64_t d, int64_t h, int64_t w,
                                   const std::array<double, 3>& sigma, Rng& rng) {
  check(d >= 1 && h >= 1 && w >= 1, "synth: extents must be positive");
  int64_t n = d * h * w;
  std::vector<double> f(static_cast<size_t>(n));
  for (auto& x : f) x = rng.normal();
  smooth_axis(f, d, h, w, 0, sigma[0]);
  smooth_axis(f, d, h, w, 1, sigma[1]);
  smooth_axis(f, d, h, w, 2, sigma[2]);

  double mean = 0;
  for (double x : f) mean += x;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double x : f) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  if (!(var > 0)) throw RuntimeFailure("synth: degenerate field, zero variance");
  double inv = 1.0 / std::sqrt(var);
  for (double& x : f) x = (x - mean) * inv;
  return f;
}

VoxelVolume threshold_to_porosity(const std::vector<double>& field, int64_t d, int64_t h,
                                  int64_t w, double phi_target, double voxel_um) {
  if (!(phi_target > 0 && phi_target < 1)) throw ConfigError("synth: phi_target must be in (0,1)");
  int64_t n = d * h * w;
  check(static_cast<int64_t>(field.size()) == n, "synth: field size does not match extents");
  int64_t n_pore = llround(phi_target * static_cast<double>(n));

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (field[a] != field[b]) return field[a] > field[b];
    return a < b;  // raster order wins ties
  });
  VoxelVolume v = make_volume(d, h, w, voxel_um);
  for (int64_t r = 0; r < n_pore; ++r) v.values[order[r]] = 1;
  return v;
}

VoxelVolume synth_volume(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto field = gaussian_field(spec.d, spec.h, spec.w, spec.sigma, rng);
  return threshold_to_porosity(field, spec.d, spec.h, spec.w, spec.phi_target, spec.voxel_um);
}

DatasetManifest make_dataset(const std::vector<SynthClassSpec>& classes, int64_t per_class,
                             const std::array<int64_t, 3>& extents, int64_t l, int64_t stride,
                             uint64_t master_seed, const std::string& out_dir) {
  if (per_class < 0) throw ConfigError("synth: per_class must be >= 0");
  std::filesystem::create_directories(out_dir);
  DatasetManifest m;
  m.seed = master_seed;
  m.split_seed = master_seed;
  m.l = l;
  m.stride = stride;
  m.rng_algo = rng_name();
  for (const auto& c : classes) m.classes.push_back(c.name);

  for (size_t c = 0; c < classes.size(); ++c) {
    const auto& cls = classes[c];
    for (int64_t k = 0; k < per_class; ++k) {
      SynthSpec spec;
      spec.d = extents[0];
      spec.h = extents[1];
      spec.w = extents[2];
      spec.sigma = cls.sigma;
      spec.seed = derive_seed(master_seed, (static_cast<uint64_t>(c) << 32) + static_cast<uint64_t>(k));
      spec.voxel_um = cls.voxel_um;
      // the porosity draw shares the volume's stream, ahead of the noise
      Rng rng(spec.seed);
      spec.phi_target = rng.uniform(cls.phi_lo, cls.phi_hi);
      spec.validate();
      auto field = gaussian_field(spec.d, spec.h, spec.w, spec.sigma, rng);
      auto vol = threshold_to_porosity(field, spec.d, spec.h, spec.w, spec.phi_target, spec.voxel_um);

      char name[64];
      std::snprintf(name, sizeof name, "c%zu_v%03lld.rvox", c, static_cast<long long>(k));
      save_rvox((std::filesystem::path(out_dir) / name).string(), vol);
      ManifestEntry e;
      e.path = name;
      e.label = static_cast<int64_t>(c);
      int64_t pores = 0;
      for (uint8_t b : vol.values) pores += b;
      e.porosity = static_cast<double>(pores) / static_cast<double>(vol.size());
      m.volumes.push_back(e);
    }
  }
  m.base_dir = out_dir;
  save_manifest((std::filesystem::path(out_dir) / "manifest.json").string(), m);
  return m;
}

}  // namespace rockgpt
