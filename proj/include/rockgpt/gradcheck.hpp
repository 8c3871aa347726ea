// gradcheck.hpp: analytic gradients vs central finite differences.
// relative error is |a - n| / max(|a|, |n|, 1), so tiny gradients are judged
// on absolute error. the scalar function is re-evaluated from the same input
// tensors after in-place nudges; ops copy eagerly, so this is safe.
#pragma once

#include <functional>

#include "rockgpt/ops.hpp"

namespace rockgpt {

struct GradProbe {
  size_t input;
  int64_t coord;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckResult {
  std::vector<GradProbe> probes;
  double max_rel_err = 0.0;
};

// probes > 0 samples that many random coordinates; probes == 0 checks all
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(Context<T>&)>& f,
                           std::vector<Tensor<T>> inputs, double delta, int probes = 0,
                           uint64_t seed = 1) {
  for (auto& t : inputs) t.set_requires_grad(true);

  Tape<T> tape;
  Context<T> ctx{&tape, false, nullptr};
  Tensor<T> loss = f(ctx);
  if (loss.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
  tape.backward(loss);
  std::vector<std::vector<T>> analytic;
  for (auto& t : inputs) {
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<T>(t.numel(), T(0)));
    t.zero_grad();
  }

  std::vector<std::pair<size_t, int64_t>> coords;
  if (probes > 0) {
    Rng rng(seed);
    int64_t total = 0;
    for (auto& t : inputs) total += t.numel();
    for (int p = 0; p < probes; ++p) {
      int64_t pick = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(total)));
      size_t i = 0;
      while (pick >= inputs[i].numel()) pick -= inputs[i++].numel();
      coords.emplace_back(i, pick);
    }
  } else {
    for (size_t i = 0; i < inputs.size(); ++i)
      for (int64_t j = 0; j < inputs[i].numel(); ++j) coords.emplace_back(i, j);
  }

  Context<T> eval{nullptr, false, nullptr};
  GradCheckResult res;
  for (auto [i, j] : coords) {
    T saved = inputs[i].data()[j];
    inputs[i].data()[j] = saved + static_cast<T>(delta);
    double fp = static_cast<double>(f(eval).item());
    inputs[i].data()[j] = saved - static_cast<T>(delta);
    double fm = static_cast<double>(f(eval).item());
    inputs[i].data()[j] = saved;
    double numeric = (fp - fm) / (2.0 * delta);
    double a = static_cast<double>(analytic[i][j]);
    double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
    res.probes.push_back({i, j, a, numeric, rel});
    res.max_rel_err = std::max(res.max_rel_err, rel);
  }
  return res;
}

// one row of the op-level verification table (shared by tests and the cli)
struct GradSuiteRow {
  std::string op;
  double max_rel_err;
  double tol;
  bool pass;
  bool expected_mismatch = false;  // stop_gradient: discrepancy is the pass state
};

// precision: "f32" or "f64". runs every differentiable op with >= `probes`
// random probes against central differences.
std::vector<GradSuiteRow> run_grad_suite(const std::string& precision, int probes, uint64_t seed);

}  // namespace rockgpt
