#include "rockgpt/gpt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rockgpt {

void GptConfig::validate() const {
  if (blocks < 1) throw ConfigError("gpt: blocks must be >= 1");
  if (d_model < 1 || heads < 1) throw ConfigError("gpt: d_model and heads must be >= 1");
  if (d_model % heads != 0) throw ConfigError("gpt: d_model must be divisible by heads");
  if (mlp_mult < 1) throw ConfigError("gpt: mlp_mult must be >= 1");
  if (vocab < 2) throw ConfigError("gpt: vocab must be >= 2");
  if (code_dim < 1) throw ConfigError("gpt: code_dim must be >= 1");
  if (max_seq < 1) throw ConfigError("gpt: max_seq must be >= 1");
  if (num_classes < 1) throw ConfigError("gpt: num_classes must be >= 1");
  if (cond_base < 1) throw ConfigError("gpt: cond_base must be >= 1");
  if (!(dropout >= real(0) && dropout < real(1))) throw ConfigError("gpt: dropout must be in [0,1)");
}

void CondBatch::validate(int64_t num_classes) const {
  if (slice.rank() != 5 || slice.size(1) != 1 || slice.size(2) != 1)
    throw ConfigError("cond batch: slice must be [n,1,1,H,W], got " + shape_str(slice.shape()));
  int64_t n = slice.size(0);
  for (int64_t i = 0; i < slice.numel(); ++i)
    if (!(slice.data()[i] >= real(0) && slice.data()[i] <= real(1)))
      throw ConfigError("cond batch: slice values must lie in [0,1]");
  if (class_onehot.rank() != 2 || class_onehot.size(0) != n || class_onehot.size(1) != num_classes)
    throw ConfigError("cond batch: class_onehot must be [n," + std::to_string(num_classes) + "]");
  for (int64_t i = 0; i < n; ++i) {
    int64_t ones = 0;
    for (int64_t c = 0; c < num_classes; ++c) {
      real v = class_onehot.data()[i * num_classes + c];
      if (v != real(0) && v != real(1)) throw ConfigError("cond batch: class rows must be one-hot");
      if (v == real(1)) ++ones;
    }
    if (ones != 1) throw ConfigError("cond batch: class rows must have exactly one 1");
  }
  if (porosity.rank() != 2 || porosity.size(0) != n || porosity.size(1) != 1)
    throw ConfigError("cond batch: porosity must be [n,1]");
  for (int64_t i = 0; i < n; ++i)
    if (!(porosity.data()[i] >= real(0) && porosity.data()[i] <= real(1)))
      throw ConfigError("cond batch: porosity must lie in [0,1]");
}

namespace {

// conditioner projections start as the identity map: zero weights, constant bias
LinearLayer const_linear(int64_t in, int64_t out, real bias_value) {
  LinearLayer l;
  l.w = RTensor::zeros({in, out});
  l.b = RTensor::full({out}, bias_value);
  return l;
}

// [n,T,d] -> [n,heads,T,dh] so heads become attention groups
RTensor split_heads(RContext& ctx, const RTensor& x, int64_t heads) {
  int64_t n = x.size(0), t = x.size(1), d = x.size(2);
  auto r = ops::reshape(ctx, x, {n, t, heads, d / heads});
  return ops::permute(ctx, r, {0, 2, 1, 3});
}

RTensor merge_heads(RContext& ctx, const RTensor& x) {
  int64_t n = x.size(0), h = x.size(1), t = x.size(2), dh = x.size(3);
  auto p = ops::permute(ctx, x, {0, 2, 1, 3});
  return ops::reshape(ctx, p, {n, t, h * dh});
}

RTensor self_attention(RContext& ctx, const GptBlock& b, const RTensor& x, int64_t heads,
                       const std::vector<uint8_t>& mask) {
  auto q = split_heads(ctx, b.self_q.forward(ctx, x), heads);
  auto k = split_heads(ctx, b.self_k.forward(ctx, x), heads);
  auto v = split_heads(ctx, b.self_v.forward(ctx, x), heads);
  auto a = ops::masked_attention(ctx, q, k, v, &mask);
  return b.self_o.forward(ctx, merge_heads(ctx, a));
}

RTensor cross_attention(RContext& ctx, const GptBlock& b, const RTensor& x, const RTensor& feat_k,
                        const RTensor& feat_v, int64_t heads) {
  auto q = split_heads(ctx, b.cross_q.forward(ctx, x), heads);
  auto a = ops::masked_attention(ctx, q, feat_k, feat_v, nullptr);
  return b.cross_o.forward(ctx, merge_heads(ctx, a));
}

RTensor mlp(RContext& ctx, const GptBlock& b, const RTensor& x) {
  return b.mlp_out.forward(ctx, ops::relu(ctx, b.mlp_in.forward(ctx, x)));
}

}  // namespace

CondResNetGroup CondResNetGroup::make(int64_t ci, int64_t co, Triple stride, Rng& rng) {
  CondResNetGroup g;
  g.proj_conv3 = Conv3dLayer::make(ci, co, {3, 3, 3}, stride, {1, 1, 1}, false, rng);
  g.proj_conv1 = Conv3dLayer::make(ci, co, {1, 1, 1}, stride, {0, 0, 0}, false, rng);
  g.proj_ln3 = LayerNormAxis::make(co, 1);
  g.proj_ln1 = LayerNormAxis::make(co, 1);
  g.id_conv_a = Conv3dLayer::make(co, co, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, rng);
  g.id_conv_b = Conv3dLayer::make(co, co, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, rng);
  g.id_ln_a = LayerNormAxis::make(co, 1);
  g.id_ln_b = LayerNormAxis::make(co, 1);
  return g;
}

RTensor CondResNetGroup::forward(RContext& ctx, const RTensor& x) const {
  auto main_path = ops::relu(ctx, proj_ln3.forward(ctx, proj_conv3.forward(ctx, x)));
  auto shortcut = proj_ln1.forward(ctx, proj_conv1.forward(ctx, x));
  auto y = ops::add(ctx, main_path, shortcut);
  auto h = ops::relu(ctx, id_ln_a.forward(ctx, id_conv_a.forward(ctx, y)));
  h = ops::relu(ctx, id_ln_b.forward(ctx, id_conv_b.forward(ctx, h)));
  return ops::add(ctx, y, h);
}

void CondResNetGroup::collect(const std::string& prefix, NamedTensors& params) {
  proj_conv3.collect(prefix + "proj_conv3", params);
  proj_ln3.collect(prefix + "proj_ln3", params);
  proj_conv1.collect(prefix + "proj_conv1", params);
  proj_ln1.collect(prefix + "proj_ln1", params);
  id_conv_a.collect(prefix + "id_conv_a", params);
  id_ln_a.collect(prefix + "id_ln_a", params);
  id_conv_b.collect(prefix + "id_conv_b", params);
  id_ln_b.collect(prefix + "id_ln_b", params);
}

CondResNet CondResNet::make(int64_t base, Rng& rng) {
  CondResNet r;
  r.init_conv = Conv3dLayer::make(1, base, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, rng);
  r.init_ln = LayerNormAxis::make(base, 1);
  r.groups.push_back(CondResNetGroup::make(base, base, {1, 1, 1}, rng));
  r.groups.push_back(CondResNetGroup::make(base, 2 * base, {1, 2, 2}, rng));
  r.groups.push_back(CondResNetGroup::make(2 * base, 4 * base, {1, 2, 2}, rng));
  r.groups.push_back(CondResNetGroup::make(4 * base, 9 * base, {1, 1, 1}, rng));
  return r;
}

RTensor CondResNet::forward(RContext& ctx, const RTensor& slice) const {
  if (slice.rank() != 5 || slice.size(1) != 1 || slice.size(2) != 1)
    throw ConfigError("condition encoder: slice must be [n,1,1,H,W]");
  if (slice.size(3) % 4 != 0 || slice.size(4) % 4 != 0)
    throw ConfigError("condition encoder: slice extents must be multiples of 4");
  auto x = ops::relu(ctx, init_ln.forward(ctx, init_conv.forward(ctx, slice)));
  for (const auto& g : groups) x = g.forward(ctx, x);
  // [n,C,1,h,w] -> tokens [n, h*w, C], then fixed position encoding
  int64_t n = x.size(0), c = x.size(1), tc = x.size(2) * x.size(3) * x.size(4);
  auto tok = ops::reshape(ctx, ops::permute(ctx, x, {0, 2, 3, 4, 1}), {n, tc, c});
  return ops::add_leading(ctx, tok, sinusoidal_pe(tc, c));
}

void CondResNet::collect(const std::string& prefix, NamedTensors& params) {
  init_conv.collect(prefix + "init_conv", params);
  init_ln.collect(prefix + "init_ln", params);
  for (size_t i = 0; i < groups.size(); ++i)
    groups[i].collect(prefix + "group" + std::to_string(i) + ".", params);
}

CondLayerNorm CondLayerNorm::make(int64_t d, int64_t num_classes) {
  CondLayerNorm c;
  c.ln = LayerNormAxis::make(d, 2);
  c.g_class = const_linear(num_classes, d, real(1));
  c.b_class = const_linear(num_classes, d, real(0));
  c.g_prop = const_linear(1, d, real(1));
  c.b_prop = const_linear(1, d, real(0));
  return c;
}

RTensor CondLayerNorm::forward(RContext& ctx, const RTensor& x, const CondBatch* cond) const {
  auto y = ln.forward(ctx, x);
  if (!cond) return y;
  y = ops::modulate(ctx, y, g_class.forward(ctx, cond->class_onehot),
                    b_class.forward(ctx, cond->class_onehot));
  y = ops::modulate(ctx, y, g_prop.forward(ctx, cond->porosity),
                    b_prop.forward(ctx, cond->porosity));
  return y;
}

void CondLayerNorm::collect(const std::string& prefix, NamedTensors& params) {
  ln.collect(prefix + "ln", params);
  g_class.collect(prefix + "g_class", params);
  b_class.collect(prefix + "b_class", params);
  g_prop.collect(prefix + "g_prop", params);
  b_prop.collect(prefix + "b_prop", params);
}

GptBlock GptBlock::make(const GptConfig& cfg, Rng& rng) {
  GptBlock b;
  int64_t d = cfg.d_model;
  b.cln1 = CondLayerNorm::make(d, cfg.num_classes);
  b.cln2 = CondLayerNorm::make(d, cfg.num_classes);
  b.cln3 = CondLayerNorm::make(d, cfg.num_classes);
  b.self_q = LinearLayer::make(d, d, true, rng);
  b.self_k = LinearLayer::make(d, d, true, rng);
  b.self_v = LinearLayer::make(d, d, true, rng);
  b.self_o = LinearLayer::make(d, d, true, rng);
  b.cross_q = LinearLayer::make(d, d, true, rng);
  b.cross_k = LinearLayer::make(cfg.feat_dim(), d, true, rng);
  b.cross_v = LinearLayer::make(cfg.feat_dim(), d, true, rng);
  // zero output projection: at init the cross path contributes nothing, so a
  // fresh conditional model scores sequences exactly like its unconditional twin
  b.cross_o = const_linear(d, d, real(0));
  b.mlp_in = LinearLayer::make(d, cfg.mlp_mult * d, true, rng);
  b.mlp_out = LinearLayer::make(cfg.mlp_mult * d, d, true, rng);
  return b;
}

void GptBlock::collect(const std::string& prefix, NamedTensors& params) {
  cln1.collect(prefix + "cln1.", params);
  self_q.collect(prefix + "self_q", params);
  self_k.collect(prefix + "self_k", params);
  self_v.collect(prefix + "self_v", params);
  self_o.collect(prefix + "self_o", params);
  cln2.collect(prefix + "cln2.", params);
  cross_q.collect(prefix + "cross_q", params);
  cross_k.collect(prefix + "cross_k", params);
  cross_v.collect(prefix + "cross_v", params);
  cross_o.collect(prefix + "cross_o", params);
  cln3.collect(prefix + "cln3.", params);
  mlp_in.collect(prefix + "mlp_in", params);
  mlp_out.collect(prefix + "mlp_out", params);
}

CondGpt CondGpt::make(const GptConfig& cfg, Rng& rng) {
  cfg.validate();
  CondGpt m;
  m.cfg = cfg;
  // placeholder rows; training installs the learned codebook via set_codebook
  m.input_codebook = RTensor::uniform({cfg.vocab, cfg.code_dim}, real(1) / real(cfg.vocab), rng);
  m.in_proj = LinearLayer::make(cfg.code_dim, cfg.d_model, true, rng);
  real bound = real(1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  m.start_token = RTensor::uniform({1, 1, cfg.d_model}, bound, rng);
  m.pos_table = sinusoidal_pe(cfg.max_seq, cfg.d_model);
  m.resnet = CondResNet::make(cfg.cond_base, rng);
  for (int64_t i = 0; i < cfg.blocks; ++i) m.blocks.push_back(GptBlock::make(cfg, rng));
  m.ln_f = LayerNormAxis::make(cfg.d_model, 2);
  m.head = LinearLayer::make(cfg.d_model, cfg.vocab, true, rng);
  return m;
}

void CondGpt::set_codebook(const RTensor& codebook) {
  if (codebook.rank() != 2 || codebook.size(0) != cfg.vocab || codebook.size(1) != cfg.code_dim)
    throw ConfigError("set_codebook: table must be [" + std::to_string(cfg.vocab) + "," +
                      std::to_string(cfg.code_dim) + "], got " + shape_str(codebook.shape()));
  input_codebook = RTensor::from(codebook.shape(), codebook.values());
}

RTensor CondGpt::forward(RContext& ctx, const std::vector<int32_t>& tokens, int64_t n,
                         const CondBatch* cond) {
  check(n >= 1 && static_cast<int64_t>(tokens.size()) % n == 0,
        "gpt forward: token count must be a multiple of the batch size");
  int64_t t = static_cast<int64_t>(tokens.size()) / n;
  check(t >= 1 && t <= cfg.max_seq, "gpt forward: sequence length out of range");
  if (cfg.conditional) {
    if (!cond) throw ConfigError("gpt forward: conditional model needs a condition batch");
    cond->validate(cfg.num_classes);
    check(cond->slice.size(0) == n, "gpt forward: condition batch size mismatch");
  } else if (cond) {
    throw ConfigError("gpt forward: unconditional model takes no condition batch");
  }

  // shift right: position 0 is the learned start, positions 1..T-1 embed the
  // first T-1 tokens, so logits at i only depend on tokens before i
  auto x = ops::repeat0(ctx, start_token, n);
  if (t > 1) {
    std::vector<int32_t> in_ids;
    in_ids.reserve(n * (t - 1));
    for (int64_t b = 0; b < n; ++b)
      for (int64_t i = 0; i < t - 1; ++i) in_ids.push_back(tokens[b * t + i]);
    auto emb = ops::embedding(ctx, input_codebook, in_ids);
    auto proj = in_proj.forward(ctx, ops::reshape(ctx, emb, {n, t - 1, cfg.code_dim}));
    x = ops::concat(ctx, {x, proj}, 1);
  }
  x = ops::add_leading(ctx, x, ops::slice(ctx, pos_table, 0, 0, t));

  RTensor feat_base;
  std::vector<RTensor> feat_k(blocks.size()), feat_v(blocks.size());
  if (cfg.conditional) {
    feat_base = resnet.forward(ctx, cond->slice);
    for (size_t i = 0; i < blocks.size(); ++i) {
      feat_k[i] = split_heads(ctx, blocks[i].cross_k.forward(ctx, feat_base), cfg.heads);
      feat_v[i] = split_heads(ctx, blocks[i].cross_v.forward(ctx, feat_base), cfg.heads);
    }
  }
  const CondBatch* mod = cfg.conditional ? cond : nullptr;

  auto mask = ops::causal_mask(t);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    auto h1 = b.cln1.forward(ctx, x, mod);
    x = ops::add(ctx, x, ops::dropout(ctx, self_attention(ctx, b, h1, cfg.heads, mask), cfg.dropout));
    if (cfg.conditional) {
      auto h2 = b.cln2.forward(ctx, x, mod);
      auto ca = cross_attention(ctx, b, h2, feat_k[i], feat_v[i], cfg.heads);
      x = ops::add(ctx, x, ops::dropout(ctx, ca, cfg.dropout));
    }
    auto h3 = b.cln3.forward(ctx, x, mod);
    x = ops::add(ctx, x, ops::dropout(ctx, mlp(ctx, b, h3), cfg.dropout));
  }
  return head.forward(ctx, ln_f.forward(ctx, x));
}

RTensor CondGpt::nll(RContext& ctx, const RTensor& logits, const std::vector<int32_t>& targets) {
  check(logits.rank() == 3 && logits.size(2) == cfg.vocab, "gpt nll: logits must be [n,T,vocab]");
  int64_t rows = logits.size(0) * logits.size(1);
  check(static_cast<int64_t>(targets.size()) == rows, "gpt nll: target count mismatch");
  return ops::cross_entropy(ctx, ops::reshape(ctx, logits, {rows, cfg.vocab}), targets);
}

std::vector<int32_t> CondGpt::sample_tokens(const CondBatch* cond, int64_t length,
                                            const SampleSettings& st, Rng& rng) {
  if (length < 1 || length > cfg.max_seq) throw ConfigError("sample: length out of range");
  RContext ctx{nullptr, false, &rng};
  if (cfg.conditional) {
    if (!cond) throw ConfigError("sample: conditional model needs a condition batch");
    cond->validate(cfg.num_classes);
    check(cond->slice.size(0) == 1, "sample: one condition at a time");
  } else if (cond) {
    throw ConfigError("sample: unconditional model takes no condition batch");
  }

  // per-chunk constants: condition feature tokens projected per block
  std::vector<RTensor> feat_k(blocks.size()), feat_v(blocks.size());
  if (cfg.conditional) {
    auto feat = resnet.forward(ctx, cond->slice);
    for (size_t i = 0; i < blocks.size(); ++i) {
      feat_k[i] = split_heads(ctx, blocks[i].cross_k.forward(ctx, feat), cfg.heads);
      feat_v[i] = split_heads(ctx, blocks[i].cross_v.forward(ctx, feat), cfg.heads);
    }
  }
  const CondBatch* mod = cfg.conditional ? cond : nullptr;

  // growing self-attention caches, one k and one v per block
  std::vector<RTensor> kc(blocks.size()), vc(blocks.size());
  std::vector<int32_t> out;
  out.reserve(length);
  for (int64_t t = 0; t < length; ++t) {
    RTensor x;
    if (t == 0) {
      x = start_token;
    } else {
      auto emb = ops::embedding(ctx, input_codebook, {out.back()});
      x = in_proj.forward(ctx, ops::reshape(ctx, emb, {1, 1, cfg.code_dim}));
    }
    x = ops::add_leading(ctx, x, ops::slice(ctx, pos_table, 0, t, 1));
    for (size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      auto h1 = b.cln1.forward(ctx, x, mod);
      auto q = split_heads(ctx, b.self_q.forward(ctx, h1), cfg.heads);
      auto k = split_heads(ctx, b.self_k.forward(ctx, h1), cfg.heads);
      auto v = split_heads(ctx, b.self_v.forward(ctx, h1), cfg.heads);
      kc[i] = (t == 0) ? k : ops::concat(ctx, {kc[i], k}, 2);
      vc[i] = (t == 0) ? v : ops::concat(ctx, {vc[i], v}, 2);
      // the cache holds positions <= t only, so no mask is needed
      auto a = ops::masked_attention(ctx, q, kc[i], vc[i], nullptr);
      x = ops::add(ctx, x, b.self_o.forward(ctx, merge_heads(ctx, a)));
      if (cfg.conditional) {
        auto h2 = b.cln2.forward(ctx, x, mod);
        x = ops::add(ctx, x, cross_attention(ctx, b, h2, feat_k[i], feat_v[i], cfg.heads));
      }
      auto h3 = b.cln3.forward(ctx, x, mod);
      x = ops::add(ctx, x, mlp(ctx, b, h3));
    }
    auto logits = head.forward(ctx, ln_f.forward(ctx, x));
    out.push_back(sample_logits(logits.data(), cfg.vocab, st, rng));
  }
  return out;
}

void CondGpt::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  buffers.add(prefix + "input_codebook", input_codebook);
  in_proj.collect(prefix + "in_proj", params);
  params.add(prefix + "start", start_token);
  resnet.collect(prefix + "cond.", params);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + "block" + std::to_string(i) + ".", params);
  ln_f.collect(prefix + "ln_f", params);
  head.collect(prefix + "head", params);
}

int32_t sample_logits(const real* logits, int64_t vocab, const SampleSettings& st, Rng& rng) {
  check(vocab >= 1, "sample_logits: empty vocabulary");
  if (st.greedy) {
    int64_t best = 0;
    for (int64_t i = 1; i < vocab; ++i)
      if (logits[i] > logits[best]) best = i;
    return static_cast<int32_t>(best);
  }
  if (!(st.temperature > 0)) throw ConfigError("sample_logits: temperature must be positive");
  if (st.top_k < 0) throw ConfigError("sample_logits: top_k must be >= 0");
  double mx = logits[0];
  for (int64_t i = 1; i < vocab; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  std::vector<double> p(vocab);
  for (int64_t i = 0; i < vocab; ++i)
    p[i] = std::exp((static_cast<double>(logits[i]) - mx) / st.temperature);
  if (st.top_k > 0 && st.top_k < vocab) {
    std::vector<int64_t> order(vocab);
    std::iota(order.begin(), order.end(), 0);
    // stable sort keeps the lowest index first among equal probabilities
    std::stable_sort(order.begin(), order.end(),
                     [&](int64_t a, int64_t b) { return p[a] > p[b]; });
    for (int64_t r = st.top_k; r < vocab; ++r) p[order[r]] = 0;
  }
  double z = 0;
  for (int64_t i = 0; i < vocab; ++i) z += p[i];
  double u = rng.uniform() * z;
  double c = 0;
  int64_t last = 0;
  for (int64_t i = 0; i < vocab; ++i) {
    if (p[i] <= 0) continue;
    c += p[i];
    last = i;
    if (u < c) return static_cast<int32_t>(i);
  }
  return static_cast<int32_t>(last);  // rounding pushed u past the final bucket
}

}  // namespace rockgpt
