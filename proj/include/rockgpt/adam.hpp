// adam.hpp: Adam with bias correction over an ordered parameter list.
// step(): t += 1 first, then m/v updates and the corrected update. gradients
// are consumed and cleared. any non-finite gradient rejects the whole update
// before any parameter is touched.
#pragma once

#include <cmath>

#include "rockgpt/tensor.hpp"

namespace rockgpt {

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(3e-4);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig<T> cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].numel(), T(0));
      v_[i].assign(params_[i].numel(), T(0));
    }
  }

  void step() {
    for (auto& p : params_)
      for (T g : p.grad_view())
        if (!std::isfinite(static_cast<double>(g)))
          throw RuntimeFailure("adam: non-finite gradient, update rejected");
    ++t_;
    T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
    T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i];
      const std::vector<T>& g = p.grad_view();
      if (g.empty()) {
        // untouched parameter: moments decay, update stays zero from fresh state
        for (int64_t j = 0; j < p.numel(); ++j) {
          m_[i][j] *= cfg_.beta1;
          v_[i][j] *= cfg_.beta2;
          T mh = m_[i][j] / bc1;
          T vh = v_[i][j] / bc2;
          p.data()[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
        continue;
      }
      for (int64_t j = 0; j < p.numel(); ++j) {
        m_[i][j] = cfg_.beta1 * m_[i][j] + (T(1) - cfg_.beta1) * g[j];
        v_[i][j] = cfg_.beta2 * v_[i][j] + (T(1) - cfg_.beta2) * g[j] * g[j];
        T mh = m_[i][j] / bc1;
        T vh = v_[i][j] / bc2;
        p.data()[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
      p.zero_grad();
    }
  }

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  size_t size() const { return params_.size(); }
  std::vector<T>& moment1(size_t i) { return m_[i]; }
  std::vector<T>& moment2(size_t i) { return v_[i]; }
  const AdamConfig<T>& config() const { return cfg_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig<T> cfg_;
  std::vector<std::vector<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace rockgpt
