#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>

#include "rockgpt/adam.hpp"
#include "rockgpt/ops.hpp"

using namespace rockgpt;

TEST_CASE("tensor construction and validation") {
  auto t = Tensor<double>::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.size(1) == 3);
  for (double v : t.values()) CHECK(v == 0.0);

  auto f = Tensor<double>::full({2, 2}, 1.5);
  CHECK(f.values()[3] == 1.5);

  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor<double>::scalar(7.0).item() == 7.0);
}

TEST_CASE("grad storage is lazy and clearable") {
  auto t = Tensor<double>::zeros({4});
  CHECK(!t.has_grad());
  CHECK(t.grad_view().empty());
  t.grad()[2] = 1.0;
  CHECK(t.has_grad());
  CHECK(t.grad_view().size() == 4);
  t.zero_grad();
  CHECK(!t.has_grad());
}

TEST_CASE("tape replays each record exactly once, reverse order") {
  Tape<double> tape;
  Context<double> ctx{&tape, false, nullptr};
  auto x = Tensor<double>::from({2}, {1.0, 2.0}).set_requires_grad(true);
  // diamond: x feeds two branches that rejoin
  auto a = ops::scale(ctx, x, 3.0);
  auto b = ops::mul(ctx, x, x);
  auto y = ops::add(ctx, a, b);
  auto loss = ops::sum_all(ctx, y);
  tape.backward(loss);
  CHECK(tape.record_count() == 4);
  CHECK(tape.executed_count() == tape.record_count());
  // d/dx (3x + x^2) = 3 + 2x
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  CHECK(x.grad()[1] == doctest::Approx(7.0));
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tape;
  Context<double> ctx{&tape, false, nullptr};
  auto x = Tensor<double>::from({2}, {1.0, 2.0}).set_requires_grad(true);
  auto y = ops::scale(ctx, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("rng streams are reproducible and distinct") {
  CHECK(derive_seed(42, 0) == derive_seed(42, 0));
  CHECK(derive_seed(42, 0) != derive_seed(42, 1));
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));

  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  double acc = 0;
  for (int i = 0; i < 4000; ++i) acc += r.normal();
  CHECK(std::abs(acc / 4000.0) < 0.1);

  for (int i = 0; i < 200; ++i) {
    uint64_t k = r.uniform_int(7);
    CHECK(k < 7);
  }
  CHECK(rng_name() == std::string("mt19937_64/boxmuller-polar/v1"));
}

TEST_CASE("parallel_for covers every index exactly once") {
  set_threads(4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) hits[i].fetch_add(1);
  });
  for (auto& h : hits) CHECK(h.load() == 1);

  // empty range is a no-op
  parallel_for(0, [&](int64_t, int64_t) { CHECK(false); });
  set_threads(1);
}

TEST_CASE("adam first step moves each weight by -lr * sign(grad)") {
  auto p = Tensor<float>::from({4}, {0.5f, -0.25f, 1.0f, 0.0f}).set_requires_grad(true);
  auto g = p.grad();  // allocate
  p.grad() = {1.0f, -2.0f, 0.5f, 3.0f};
  AdamConfig<float> cfg;
  cfg.lr = 1e-3f;
  Adam<float> opt({p}, cfg);
  opt.step();
  // bias-corrected m/sqrt(v) is sign(g) on the first step (eps is negligible)
  CHECK(p.values()[0] == doctest::Approx(0.5f - 1e-3f).epsilon(1e-4));
  CHECK(p.values()[1] == doctest::Approx(-0.25f + 1e-3f).epsilon(1e-4));
  CHECK(p.values()[2] == doctest::Approx(1.0f - 1e-3f).epsilon(1e-4));
  CHECK(p.values()[3] == doctest::Approx(0.0f - 1e-3f).epsilon(1e-4));
  CHECK(opt.steps() == 1);
  CHECK(!p.has_grad());  // grads consumed
  (void)g;
}

TEST_CASE("adam leaves a parameter with zero gradient untouched from fresh state") {
  auto p = Tensor<float>::from({2}, {0.125f, -8.0f}).set_requires_grad(true);
  Adam<float> opt({p}, {});
  opt.step();  // no grad allocated at all
  CHECK(p.values()[0] == 0.125f);
  CHECK(p.values()[1] == -8.0f);
  p.grad();  // zero-filled grad
  opt.step();
  CHECK(p.values()[0] == 0.125f);
  CHECK(p.values()[1] == -8.0f);
}

TEST_CASE("adam rejects non-finite gradients before touching anything") {
  auto p = Tensor<float>::from({2}, {1.0f, 2.0f}).set_requires_grad(true);
  Adam<float> opt({p}, {});
  p.grad() = {0.5f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_AS(opt.step(), RuntimeFailure);
  CHECK(p.values()[0] == 1.0f);
  CHECK(p.values()[1] == 2.0f);
  CHECK(opt.steps() == 0);
  CHECK(opt.moment1(0)[0] == 0.0f);
}
