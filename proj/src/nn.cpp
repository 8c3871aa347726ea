#include "rockgpt/nn.hpp"

namespace rockgpt {

void NamedTensors::add(const std::string& name, const RTensor& t) {
  for (auto& [n, _] : items)
    if (n == name) throw ConfigError("duplicate tensor name: " + name);
  items.emplace_back(name, t);
}

RTensor* NamedTensors::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const RTensor* NamedTensors::find(const std::string& name) const {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

std::vector<RTensor> NamedTensors::tensors() const {
  std::vector<RTensor> out;
  out.reserve(items.size());
  for (auto& [n, t] : items) out.push_back(t);
  return out;
}

int64_t NamedTensors::total_elements() const {
  int64_t n = 0;
  for (auto& [name, t] : items) n += t.numel();
  return n;
}

RTensor sinusoidal_pe(int64_t len, int64_t d) {
  RTensor pe = RTensor::zeros({len, d});
  for (int64_t t = 0; t < len; ++t)
    for (int64_t i = 0; i < d; ++i) {
      double arg = static_cast<double>(t) / std::pow(10000.0, double(2 * (i / 2)) / double(d));
      pe.data()[t * d + i] = static_cast<real>((i % 2 == 0) ? std::sin(arg) : std::cos(arg));
    }
  return pe;
}

LinearLayer LinearLayer::make(int64_t in, int64_t out, bool bias, Rng& rng) {
  LinearLayer l;
  real bound = static_cast<real>(1.0 / std::sqrt(static_cast<double>(in)));
  l.w = RTensor::uniform({in, out}, bound, rng);
  if (bias) l.b = RTensor::zeros({out});
  return l;
}

void LinearLayer::collect(const std::string& prefix, NamedTensors& params) {
  params.add(prefix + ".w", w);
  if (b.numel() > 0) params.add(prefix + ".b", b);
}

Conv3dLayer Conv3dLayer::make(int64_t ci, int64_t co, Triple kernel, Triple stride, Triple pad,
                              bool bias, Rng& rng) {
  Conv3dLayer l;
  l.stride = stride;
  l.pad = pad;
  int64_t fan_in = ci * kernel[0] * kernel[1] * kernel[2];
  real bound = static_cast<real>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  l.w = RTensor::uniform({co, ci, kernel[0], kernel[1], kernel[2]}, bound, rng);
  if (bias) l.b = RTensor::zeros({co});
  return l;
}

void Conv3dLayer::collect(const std::string& prefix, NamedTensors& params) {
  params.add(prefix + ".w", w);
  if (b.numel() > 0) params.add(prefix + ".b", b);
}

ConvT3dLayer ConvT3dLayer::make(int64_t ci, int64_t co, Triple kernel, Triple stride, Triple pad,
                                bool bias, Rng& rng) {
  ConvT3dLayer l;
  l.stride = stride;
  l.pad = pad;
  int64_t fan_in = ci * kernel[0] * kernel[1] * kernel[2];
  real bound = static_cast<real>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  l.w = RTensor::uniform({ci, co, kernel[0], kernel[1], kernel[2]}, bound, rng);
  if (bias) l.b = RTensor::zeros({co});
  return l;
}

void ConvT3dLayer::collect(const std::string& prefix, NamedTensors& params) {
  params.add(prefix + ".w", w);
  if (b.numel() > 0) params.add(prefix + ".b", b);
}

BatchNorm3dLayer BatchNorm3dLayer::make(int64_t channels) {
  BatchNorm3dLayer l;
  l.gain = RTensor::full({channels}, real(1));
  l.bias = RTensor::zeros({channels});
  l.running_mean = RTensor::zeros({channels});
  l.running_var = RTensor::full({channels}, real(1));
  return l;
}

void BatchNorm3dLayer::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  params.add(prefix + ".gain", gain);
  params.add(prefix + ".bias", bias);
  buffers.add(prefix + ".running_mean", running_mean);
  buffers.add(prefix + ".running_var", running_var);
}

LayerNormAxis LayerNormAxis::make(int64_t extent, int axis) {
  LayerNormAxis l;
  l.axis = axis;
  l.gain = RTensor::full({extent}, real(1));
  l.bias = RTensor::zeros({extent});
  return l;
}

void LayerNormAxis::collect(const std::string& prefix, NamedTensors& params) {
  params.add(prefix + ".gain", gain);
  params.add(prefix + ".bias", bias);
}

}  // namespace rockgpt
