// nn.hpp: float layer structs shared by the two models.
// layers are plain aggregates: a make() that draws U(-1/sqrt(fan_in), ..)
// weights and zero biases, a forward(), and a collect() that registers
// tensors under a dotted prefix. registration order is serialization order.
#pragma once

#include "rockgpt/ops.hpp"
#include "rockgpt/ops_conv.hpp"

namespace rockgpt {

// model code runs in single precision end to end
using real = float;
using RTensor = Tensor<real>;
using RContext = Context<real>;
using RTape = Tape<real>;

// ordered name -> tensor table. insertion order is stable and meaningful:
// checkpoints write tensors in this order.
struct NamedTensors {
  std::vector<std::pair<std::string, RTensor>> items;

  void add(const std::string& name, const RTensor& t);
  RTensor* find(const std::string& name);
  const RTensor* find(const std::string& name) const;
  std::vector<RTensor> tensors() const;
  int64_t total_elements() const;
};

// classic transformer position table: pe[t, 2i] = sin(t / 10000^(2i/d)),
// pe[t, 2i+1] = cos with the same argument
RTensor sinusoidal_pe(int64_t len, int64_t d);

struct LinearLayer {
  RTensor w;  // [in, out]
  RTensor b;  // [out] or empty

  static LinearLayer make(int64_t in, int64_t out, bool bias, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x) const { return ops::linear(ctx, x, w, b); }
  void collect(const std::string& prefix, NamedTensors& params);
};

struct Conv3dLayer {
  RTensor w;  // [co, ci, kd, kh, kw]
  RTensor b;  // [co] or empty
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};

  static Conv3dLayer make(int64_t ci, int64_t co, Triple kernel, Triple stride, Triple pad,
                          bool bias, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x) const {
    return ops::conv3d(ctx, x, w, b, stride, pad);
  }
  void collect(const std::string& prefix, NamedTensors& params);
};

struct ConvT3dLayer {
  RTensor w;  // [ci, co, kd, kh, kw]
  RTensor b;  // [co] or empty
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};

  static ConvT3dLayer make(int64_t ci, int64_t co, Triple kernel, Triple stride, Triple pad,
                           bool bias, Rng& rng);
  RTensor forward(RContext& ctx, const RTensor& x) const {
    return ops::conv_transpose3d(ctx, x, w, b, stride, pad);
  }
  void collect(const std::string& prefix, NamedTensors& params);
};

struct BatchNorm3dLayer {
  RTensor gain, bias;
  RTensor running_mean, running_var;  // buffers, not trained
  real momentum = real(0.1);
  real eps = real(1e-5);

  static BatchNorm3dLayer make(int64_t channels);
  RTensor forward(RContext& ctx, const RTensor& x) {
    return ops::batch_norm(ctx, x, gain, bias, running_mean, running_var, momentum, eps);
  }
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);
};

// layer norm over one axis (the channel axis in the condition encoder,
// the feature axis in the transformer)
struct LayerNormAxis {
  RTensor gain, bias;
  int axis = -1;
  real eps = real(1e-5);

  static LayerNormAxis make(int64_t extent, int axis);
  RTensor forward(RContext& ctx, const RTensor& x) const {
    return ops::layer_norm(ctx, x, {axis}, gain, bias, eps);
  }
  void collect(const std::string& prefix, NamedTensors& params);
};

}  // namespace rockgpt
