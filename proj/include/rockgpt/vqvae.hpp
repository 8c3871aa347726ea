// vqvae.hpp: discrete autoencoder over slice sequences.
// encoder downsamples a [n,1,t,H,W] binary volume into a [n,D,t',h',w']
// latent field, each site is snapped to its nearest codebook row, and the
// decoder maps the snapped field back to voxel space through a sigmoid.
// training uses the three-term objective: reconstruction (straight-through
// into the encoder), codebook pull, and beta-weighted commitment.
#pragma once

#include "rockgpt/nn.hpp"

namespace rockgpt {

struct VqVaeConfig {
  int64_t in_channels = 1;
  int64_t width = 32;       // trunk channels
  int64_t res_hidden = 0;   // bottleneck channels inside a block; 0 means width/2
  int64_t res_blocks = 2;
  Triple downsample{4, 2, 2};  // per-axis total reduction, powers of two
  int64_t codebook_size = 32;  // K
  int64_t code_dim = 16;       // D
  real beta = real(0.25);      // commitment weight

  void validate() const;
  int64_t hidden() const { return res_hidden > 0 ? res_hidden : width / 2; }
  // log2 of each downsample factor
  std::array<int, 3> stage_counts() const;
  int num_stages() const;
  // stride/kernel of downsampling stage i: stride 2 (kernel 4) on an axis
  // while that axis still has factors left, else stride 1 (kernel 3)
  Triple stage_stride(int i) const;
  Triple stage_kernel(int i) const;
};

// one single-axis self-attention per spatial axis, applied in sequence
// (t, then h, then w). single head over the full channel width; q/k/v have
// no bias, the output projection does.
struct AxialSelfAttention {
  LinearLayer q[3], k[3], v[3], out[3];

  static AxialSelfAttention make(int64_t channels, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x) const;
  void collect(const std::string& prefix, NamedTensors& params);
};

// residual block: x + axial(relu(bn3(conv1(relu(bn2(conv3(relu(bn1(x)))))))))
// conv3 narrows width -> hidden (3^3), conv1 restores hidden -> width (1^3),
// both bias-free
struct AttnResBlock {
  BatchNorm3dLayer bn1, bn2, bn3;
  Conv3dLayer conv3, conv1;
  AxialSelfAttention attn;

  static AttnResBlock make(int64_t width, int64_t hidden, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);
};

struct VqVaeEncoder {
  std::vector<Conv3dLayer> downs;  // strided, relu after each
  Conv3dLayer shape_conv;          // 3^3 width -> width, keeps the grid
  std::vector<AttnResBlock> blocks;
  BatchNorm3dLayer bn_out;
  Conv3dLayer proj;  // 1^3 width -> D

  static VqVaeEncoder make(const VqVaeConfig& cfg, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);
};

struct VqVaeDecoder {
  Conv3dLayer conv_in;  // 3^3 D -> width
  std::vector<AttnResBlock> blocks;
  BatchNorm3dLayer bn_mid;
  std::vector<ConvT3dLayer> ups;  // relu between, sigmoid after the last

  static VqVaeDecoder make(const VqVaeConfig& cfg, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& z_q);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);
};

struct VqVaeLosses {
  RTensor total;         // scalar on the tape
  double recon = 0;      // mean squared error over all voxels
  double codebook = 0;   // mean over sites of the squared snap distance
  double commit = 0;     // beta-weighted commitment term, as reported
};

struct VqVaeForward {
  RTensor z_e, z_q, x_hat;
  std::vector<int32_t> ids;  // [n * sites], site order (t, h, w)
  VqVaeLosses losses;
};

struct VqVae {
  VqVaeConfig cfg;
  VqVaeEncoder enc;
  VqVaeDecoder dec;
  RTensor codebook;  // [K, D], init U(-1/K, 1/K)

  static VqVae make(const VqVaeConfig& cfg, Rng& rng);

  RTensor encode(RContext& ctx, const RTensor& x) { return enc.forward(ctx, x); }
  RTensor decode(RContext& ctx, const RTensor& z_q) { return dec.forward(ctx, z_q); }

  // nearest codebook row per site (euclidean, ties to the lowest index)
  std::vector<int32_t> quantize(const RTensor& z_e) const;
  // codebook rows gathered back onto the latent grid; gradient reaches the
  // codebook through this path
  RTensor lookup(RContext& ctx, const std::vector<int32_t>& ids, int64_t n, Triple grid) const;
  // z_e + sg(z_q_raw - z_e): forward equals the snapped field, backward
  // copies the decoder gradient verbatim onto z_e
  RTensor straight_through(RContext& ctx, const RTensor& z_e, const RTensor& z_q_raw) const;

  VqVaeLosses loss(RContext& ctx, const RTensor& x, const RTensor& x_hat, const RTensor& z_e,
                   const RTensor& z_q_raw) const;

  // full training-graph pass: encode, snap, decode, loss
  VqVaeForward train_forward(RContext& ctx, const RTensor& x);

  Triple latent_grid(Triple spatial) const;
  std::vector<int64_t> code_histogram(const std::vector<int32_t>& ids) const;

  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);
};

}  // namespace rockgpt
