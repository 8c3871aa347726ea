#include "rockgpt/vqvae.hpp"

namespace rockgpt {

namespace {

bool power_of_two(int64_t v) { return v >= 1 && (v & (v - 1)) == 0; }

int log2_int(int64_t v) {
  int m = 0;
  while ((int64_t(1) << m) < v) ++m;
  return m;
}

}  // namespace

void VqVaeConfig::validate() const {
  if (in_channels < 1) throw ConfigError("vqvae: in_channels must be >= 1");
  if (width < 2) throw ConfigError("vqvae: width must be >= 2");
  if (hidden() < 1) throw ConfigError("vqvae: residual bottleneck must be >= 1");
  if (res_blocks < 0) throw ConfigError("vqvae: res_blocks must be >= 0");
  for (int a = 0; a < 3; ++a)
    if (!power_of_two(downsample[a]))
      throw ConfigError("vqvae: downsample factors must be powers of two, got " +
                        std::to_string(downsample[a]));
  if (codebook_size < 2) throw ConfigError("vqvae: codebook needs at least two rows");
  if (code_dim < 1) throw ConfigError("vqvae: code_dim must be >= 1");
  if (!(beta > real(0))) throw ConfigError("vqvae: beta must be > 0");
}

std::array<int, 3> VqVaeConfig::stage_counts() const {
  return {log2_int(downsample[0]), log2_int(downsample[1]), log2_int(downsample[2])};
}

int VqVaeConfig::num_stages() const {
  auto m = stage_counts();
  return std::max(m[0], std::max(m[1], m[2]));
}

Triple VqVaeConfig::stage_stride(int i) const {
  auto m = stage_counts();
  return {i < m[0] ? 2 : 1, i < m[1] ? 2 : 1, i < m[2] ? 2 : 1};
}

Triple VqVaeConfig::stage_kernel(int i) const {
  auto s = stage_stride(i);
  return {s[0] == 2 ? 4 : 3, s[1] == 2 ? 4 : 3, s[2] == 2 ? 4 : 3};
}

// ---- axial attention ----

AxialSelfAttention AxialSelfAttention::make(int64_t channels, Rng& rng) {
  AxialSelfAttention a;
  for (int i = 0; i < 3; ++i) {
    a.q[i] = LinearLayer::make(channels, channels, false, rng);
    a.k[i] = LinearLayer::make(channels, channels, false, rng);
    a.v[i] = LinearLayer::make(channels, channels, false, rng);
    a.out[i] = LinearLayer::make(channels, channels, true, rng);
  }
  return a;
}

RTensor AxialSelfAttention::forward(RContext& ctx, const RTensor& x) const {
  check(x.rank() == 5, "axial attention: input must be [n,C,t,h,w]");
  // bring (axis, C) to the back, fold the rest into attention groups
  static const std::vector<int> fwd[3] = {{0, 3, 4, 2, 1}, {0, 2, 4, 3, 1}, {0, 2, 3, 4, 1}};
  static const std::vector<int> rev[3] = {{0, 4, 3, 1, 2}, {0, 4, 1, 3, 2}, {0, 4, 1, 2, 3}};
  RTensor cur = x;
  for (int a = 0; a < 3; ++a) {
    RTensor p = ops::permute(ctx, cur, fwd[a]);
    Shape ps = p.shape();
    int64_t groups = ps[0] * ps[1] * ps[2], len = ps[3], c = ps[4];
    RTensor flat = ops::reshape(ctx, p, {groups, len, c});
    RTensor att = ops::masked_attention(ctx, q[a].forward(ctx, flat), k[a].forward(ctx, flat),
                                        v[a].forward(ctx, flat), nullptr);
    RTensor o = out[a].forward(ctx, att);
    cur = ops::permute(ctx, ops::reshape(ctx, o, ps), rev[a]);
  }
  return cur;
}

void AxialSelfAttention::collect(const std::string& prefix, NamedTensors& params) {
  const char* axis[3] = {"t", "h", "w"};
  for (int i = 0; i < 3; ++i) {
    std::string p = prefix + "." + axis[i];
    q[i].collect(p + ".q", params);
    k[i].collect(p + ".k", params);
    v[i].collect(p + ".v", params);
    out[i].collect(p + ".out", params);
  }
}

// ---- residual block ----

AttnResBlock AttnResBlock::make(int64_t width, int64_t hidden, Rng& rng) {
  AttnResBlock b;
  b.bn1 = BatchNorm3dLayer::make(width);
  b.conv3 = Conv3dLayer::make(width, hidden, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, rng);
  b.bn2 = BatchNorm3dLayer::make(hidden);
  b.conv1 = Conv3dLayer::make(hidden, width, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, false, rng);
  b.bn3 = BatchNorm3dLayer::make(width);
  b.attn = AxialSelfAttention::make(width, rng);
  return b;
}

RTensor AttnResBlock::forward(RContext& ctx, const RTensor& x) {
  RTensor h = ops::relu(ctx, bn1.forward(ctx, x));
  h = conv3.forward(ctx, h);
  h = ops::relu(ctx, bn2.forward(ctx, h));
  h = conv1.forward(ctx, h);
  h = ops::relu(ctx, bn3.forward(ctx, h));
  h = attn.forward(ctx, h);
  return ops::add(ctx, x, h);
}

void AttnResBlock::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  bn1.collect(prefix + ".bn1", params, buffers);
  conv3.collect(prefix + ".conv3", params);
  bn2.collect(prefix + ".bn2", params, buffers);
  conv1.collect(prefix + ".conv1", params);
  bn3.collect(prefix + ".bn3", params, buffers);
  attn.collect(prefix + ".attn", params);
}

// ---- encoder ----

VqVaeEncoder VqVaeEncoder::make(const VqVaeConfig& cfg, Rng& rng) {
  VqVaeEncoder e;
  int stages = cfg.num_stages();
  for (int i = 0; i < stages; ++i) {
    int64_t ci = i == 0 ? cfg.in_channels : cfg.width;
    e.downs.push_back(Conv3dLayer::make(ci, cfg.width, cfg.stage_kernel(i), cfg.stage_stride(i),
                                        {1, 1, 1}, true, rng));
  }
  e.shape_conv = Conv3dLayer::make(stages > 0 ? cfg.width : cfg.in_channels, cfg.width,
                                   {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, true, rng);
  for (int64_t i = 0; i < cfg.res_blocks; ++i)
    e.blocks.push_back(AttnResBlock::make(cfg.width, cfg.hidden(), rng));
  e.bn_out = BatchNorm3dLayer::make(cfg.width);
  e.proj = Conv3dLayer::make(cfg.width, cfg.code_dim, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, true, rng);
  return e;
}

RTensor VqVaeEncoder::forward(RContext& ctx, const RTensor& x) {
  RTensor h = x;
  for (auto& d : downs) h = ops::relu(ctx, d.forward(ctx, h));
  h = shape_conv.forward(ctx, h);
  for (auto& b : blocks) h = b.forward(ctx, h);
  h = ops::relu(ctx, bn_out.forward(ctx, h));
  return proj.forward(ctx, h);
}

void VqVaeEncoder::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  for (size_t i = 0; i < downs.size(); ++i)
    downs[i].collect(prefix + ".down" + std::to_string(i), params);
  shape_conv.collect(prefix + ".shape_conv", params);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), params, buffers);
  bn_out.collect(prefix + ".bn_out", params, buffers);
  proj.collect(prefix + ".proj", params);
}

// ---- decoder ----

VqVaeDecoder VqVaeDecoder::make(const VqVaeConfig& cfg, Rng& rng) {
  VqVaeDecoder d;
  d.conv_in = Conv3dLayer::make(cfg.code_dim, cfg.width, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, true, rng);
  for (int64_t i = 0; i < cfg.res_blocks; ++i)
    d.blocks.push_back(AttnResBlock::make(cfg.width, cfg.hidden(), rng));
  d.bn_mid = BatchNorm3dLayer::make(cfg.width);
  int stages = cfg.num_stages();
  for (int i = 0; i < stages; ++i) {
    int64_t co = i == stages - 1 ? cfg.in_channels : cfg.width;
    d.ups.push_back(ConvT3dLayer::make(cfg.width, co, cfg.stage_kernel(i), cfg.stage_stride(i),
                                       {1, 1, 1}, true, rng));
  }
  return d;
}

RTensor VqVaeDecoder::forward(RContext& ctx, const RTensor& z_q) {
  RTensor h = conv_in.forward(ctx, z_q);
  for (auto& b : blocks) h = b.forward(ctx, h);
  h = ops::relu(ctx, bn_mid.forward(ctx, h));
  for (size_t i = 0; i < ups.size(); ++i) {
    h = ups[i].forward(ctx, h);
    if (i + 1 < ups.size()) h = ops::relu(ctx, h);
  }
  return ops::sigmoid(ctx, h);
}

void VqVaeDecoder::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  conv_in.collect(prefix + ".conv_in", params);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), params, buffers);
  bn_mid.collect(prefix + ".bn_mid", params, buffers);
  for (size_t i = 0; i < ups.size(); ++i)
    ups[i].collect(prefix + ".up" + std::to_string(i), params);
}

// ---- model ----

VqVae VqVae::make(const VqVaeConfig& cfg, Rng& rng) {
  cfg.validate();
  VqVae m;
  m.cfg = cfg;
  m.enc = VqVaeEncoder::make(cfg, rng);
  m.codebook = RTensor::uniform({cfg.codebook_size, cfg.code_dim},
                                real(1.0 / static_cast<double>(cfg.codebook_size)), rng);
  m.dec = VqVaeDecoder::make(cfg, rng);
  return m;
}

std::vector<int32_t> VqVae::quantize(const RTensor& z_e) const {
  check(z_e.rank() == 5 && z_e.size(1) == cfg.code_dim,
        "quantize: latent must be [n,D,t,h,w] with D = " + std::to_string(cfg.code_dim));
  if (codebook.numel() == 0) throw ConfigError("quantize: empty codebook");
  int64_t n = z_e.size(0), D = cfg.code_dim, K = cfg.codebook_size;
  int64_t sites = z_e.numel() / (n * D);
  std::vector<int32_t> ids(n * sites);
  const real* pz = z_e.data();
  const real* pe = codebook.data();
  parallel_for(n * sites, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      int64_t b = i / sites, s = i % sites;
      int32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < K; ++k) {
        double d = 0;
        for (int64_t c = 0; c < D; ++c) {
          double diff = static_cast<double>(pz[(b * D + c) * sites + s]) -
                        static_cast<double>(pe[k * D + c]);
          d += diff * diff;
        }
        if (d < best_d) {  // strict: ties keep the lowest index
          best_d = d;
          best = static_cast<int32_t>(k);
        }
      }
      ids[i] = best;
    }
  });
  return ids;
}

RTensor VqVae::lookup(RContext& ctx, const std::vector<int32_t>& ids, int64_t n, Triple grid) const {
  return ops::codebook_lookup(ctx, codebook, ids, n, grid[0], grid[1], grid[2]);
}

RTensor VqVae::straight_through(RContext& ctx, const RTensor& z_e, const RTensor& z_q_raw) const {
  // the snap delta is constant to the tape, so the sum's backward sends the
  // decoder gradient straight into z_e
  RContext frozen{nullptr, ctx.training, ctx.rng};
  RTensor delta = ops::sub(frozen, z_q_raw, z_e);
  return ops::add(ctx, z_e, delta);
}

VqVaeLosses VqVae::loss(RContext& ctx, const RTensor& x, const RTensor& x_hat, const RTensor& z_e,
                        const RTensor& z_q_raw) const {
  check(x.shape() == x_hat.shape(), "vqvae loss: voxel shapes differ");
  check(z_e.shape() == z_q_raw.shape(), "vqvae loss: latent shapes differ");
  int64_t sites = z_e.numel() / cfg.code_dim;

  RTensor rdiff = ops::sub(ctx, x, x_hat);
  RTensor recon = ops::mean_all(ctx, ops::mul(ctx, rdiff, rdiff));

  // codebook pull: snap distance with the encoder side frozen
  RTensor cdiff = ops::sub(ctx, z_q_raw, ops::stop_gradient(ctx, z_e));
  RTensor pull = ops::scale(ctx, ops::sum_all(ctx, ops::mul(ctx, cdiff, cdiff)),
                            real(1.0 / static_cast<double>(sites)));

  // commitment: same distance with the codebook side frozen, beta-weighted
  RTensor ediff = ops::sub(ctx, z_e, ops::stop_gradient(ctx, z_q_raw));
  RTensor commit = ops::scale(ctx, ops::sum_all(ctx, ops::mul(ctx, ediff, ediff)),
                              cfg.beta / static_cast<real>(sites));

  VqVaeLosses l;
  l.total = ops::add(ctx, ops::add(ctx, recon, pull), commit);
  l.recon = static_cast<double>(recon.item());
  l.codebook = static_cast<double>(pull.item());
  l.commit = static_cast<double>(commit.item());
  return l;
}

VqVaeForward VqVae::train_forward(RContext& ctx, const RTensor& x) {
  check(x.rank() == 5 && x.size(1) == cfg.in_channels, "vqvae: input must be [n,c,t,h,w]");
  Triple grid = latent_grid({x.size(2), x.size(3), x.size(4)});
  VqVaeForward f;
  f.z_e = encode(ctx, x);
  f.ids = quantize(f.z_e);
  RTensor z_q_raw = lookup(ctx, f.ids, x.size(0), grid);
  f.z_q = straight_through(ctx, f.z_e, z_q_raw);
  f.x_hat = decode(ctx, f.z_q);
  f.losses = loss(ctx, x, f.x_hat, f.z_e, z_q_raw);
  return f;
}

Triple VqVae::latent_grid(Triple spatial) const {
  Triple g;
  for (int a = 0; a < 3; ++a) {
    if (spatial[a] % cfg.downsample[a] != 0)
      throw ShapeError("vqvae: spatial extent " + std::to_string(spatial[a]) +
                       " not divisible by downsample factor " + std::to_string(cfg.downsample[a]));
    g[a] = spatial[a] / cfg.downsample[a];
  }
  return g;
}

std::vector<int64_t> VqVae::code_histogram(const std::vector<int32_t>& ids) const {
  std::vector<int64_t> h(cfg.codebook_size, 0);
  for (int32_t id : ids) ++h[id];
  return h;
}

void VqVae::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  enc.collect(prefix + ".enc", params, buffers);
  params.add(prefix + ".codebook", codebook);
  dec.collect(prefix + ".dec", params, buffers);
}

}  // namespace rockgpt
