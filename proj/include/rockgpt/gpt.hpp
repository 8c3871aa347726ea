// gpt.hpp: conditional autoregressive prior over the latent token grid.
// decoder-only transformer; each block runs causal self-attention, then
// cross-attention over feature tokens of the conditional slice, then an mlp,
// every sub-module entered through a conditional layer norm that carries the
// class one-hot and the porosity target, and closed by dropout. a learned
// start embedding is prepended so position 0 is driven by conditioning alone.
#pragma once

#include "rockgpt/nn.hpp"

namespace rockgpt {

struct GptConfig {
  int64_t blocks = 4;
  int64_t d_model = 128;
  int64_t heads = 4;
  int64_t mlp_mult = 4;
  int64_t vocab = 32;      // latent codebook size K
  int64_t code_dim = 16;   // codebook row width D (input embedding width)
  int64_t max_seq = 128;   // flattened latent grid length
  int64_t num_classes = 2;
  int64_t cond_base = 8;   // conditioner trunk width; feature width is 9x this
  real dropout = real(0.1);
  bool conditional = true;

  void validate() const;
  int64_t head_dim() const { return d_model / heads; }
  int64_t feat_dim() const { return 9 * cond_base; }
};

// one batch of conditioning inputs
struct CondBatch {
  RTensor slice;         // [n,1,1,H,W], values in [0,1]
  RTensor class_onehot;  // [n,C], rows one-hot
  RTensor porosity;      // [n,1], values in [0,1]

  void validate(int64_t num_classes) const;
};

// condition-slice feature extractor: initial conv, then four residual groups
// with channel multipliers (1,2,4,9) and spatial halving in groups 2 and 3.
// all convolutions are bias-free; norms are per-channel layer norms.
struct CondResNetGroup {
  // projection block: relu(ln(conv3_s(x))) + ln(conv1_s(x))
  Conv3dLayer proj_conv3, proj_conv1;
  LayerNormAxis proj_ln3, proj_ln1;
  // identity block: x + relu(ln(conv3(relu(ln(conv3(x))))))
  Conv3dLayer id_conv_a, id_conv_b;
  LayerNormAxis id_ln_a, id_ln_b;

  static CondResNetGroup make(int64_t ci, int64_t co, Triple stride, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x) const;
  void collect(const std::string& prefix, NamedTensors& params);
};

struct CondResNet {
  Conv3dLayer init_conv;
  LayerNormAxis init_ln;
  std::vector<CondResNetGroup> groups;

  static CondResNet make(int64_t base, Rng& rng);
  // [n,1,1,H,W] -> feature tokens [n, T_c, d_c] with positional encoding added
  RTensor forward(RContext& ctx, const RTensor& slice) const;
  void collect(const std::string& prefix, NamedTensors& params);
};

// layer norm whose output is modulated twice: once by an affine map of the
// class one-hot and once by an affine map of the porosity scalar. the maps
// start at identity (zero weights, gain bias 1, shift bias 0).
struct CondLayerNorm {
  LayerNormAxis ln;
  LinearLayer g_class, b_class, g_prop, b_prop;

  static CondLayerNorm make(int64_t d, int64_t num_classes);
  RTensor forward(RContext& ctx, const RTensor& x, const CondBatch* cond) const;
  void collect(const std::string& prefix, NamedTensors& params);
};

struct GptBlock {
  CondLayerNorm cln1, cln2, cln3;
  LinearLayer self_q, self_k, self_v, self_o;
  LinearLayer cross_q, cross_k, cross_v, cross_o;  // cross_o starts at zero
  LinearLayer mlp_in, mlp_out;

  static GptBlock make(const GptConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& params);
};

struct SampleSettings {
  double temperature = 1.0;
  int64_t top_k = 0;  // 0 keeps the whole vocabulary
  bool greedy = false;
};

struct CondGpt {
  GptConfig cfg;
  RTensor input_codebook;  // [K,D] frozen rows the tokens embed to
  LinearLayer in_proj;     // D -> d
  RTensor start_token;     // [1,1,d], learned
  RTensor pos_table;       // [max_seq, d], deterministic
  CondResNet resnet;
  std::vector<GptBlock> blocks;
  LayerNormAxis ln_f;
  LinearLayer head;

  static CondGpt make(const GptConfig& cfg, Rng& rng);
  // installs the trained stage-1 codebook as the (non-trained) input table
  void set_codebook(const RTensor& codebook);

  // tokens: row-major [n, T]; logits [n, T, vocab]. logits at position i see
  // tokens < i plus the conditioning; cond may be null only when the config
  // is unconditional, and the unconditional path skips modulation and the
  // cross sub-module entirely.
  RTensor forward(RContext& ctx, const std::vector<int32_t>& tokens, int64_t n,
                  const CondBatch* cond);
  // mean nll of targets (row-major [n, T]) under the logits
  RTensor nll(RContext& ctx, const RTensor& logits, const std::vector<int32_t>& targets);

  // autoregressive draw of `length` tokens for a single condition (n = 1),
  // with per-block caches so each step only attends over what exists
  std::vector<int32_t> sample_tokens(const CondBatch* cond, int64_t length,
                                     const SampleSettings& st, Rng& rng);

  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);
};

// categorical draw from one row of logits: temperature softmax in double,
// optional top-k restriction, greedy argmax; ties resolve to the lowest index
int32_t sample_logits(const real* logits, int64_t vocab, const SampleSettings& st, Rng& rng);

}  // namespace rockgpt
