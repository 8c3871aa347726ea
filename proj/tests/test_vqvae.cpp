#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rockgpt/adam.hpp"
#include "rockgpt/vqvae.hpp"

using namespace rockgpt;

namespace {

VqVaeConfig tiny_cfg() {
  VqVaeConfig c;
  c.width = 8;
  c.res_blocks = 1;
  c.downsample = {4, 2, 2};
  c.codebook_size = 8;
  c.code_dim = 4;
  return c;
}

// a model whose codebook is exactly {(0,0), (1,1)}
VqVae two_code_model() {
  VqVaeConfig c;
  c.width = 4;
  c.res_blocks = 0;
  c.downsample = {1, 1, 1};
  c.codebook_size = 2;
  c.code_dim = 2;
  Rng rng(1);
  VqVae m = VqVae::make(c, rng);
  m.codebook.values() = {0.0f, 0.0f, 1.0f, 1.0f};
  return m;
}

RTensor latent_site(float a, float b) {
  // one batch item, one site, D = 2
  return RTensor::from({1, 2, 1, 1, 1}, {a, b});
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
  VqVaeConfig c = tiny_cfg();
  Rng rng(1);
  c.beta = 0.0f;
  CHECK_THROWS_AS(VqVae::make(c, rng), ConfigError);
  c = tiny_cfg();
  c.downsample = {3, 2, 2};
  CHECK_THROWS_AS(VqVae::make(c, rng), ConfigError);
  c = tiny_cfg();
  c.codebook_size = 1;
  CHECK_THROWS_AS(VqVae::make(c, rng), ConfigError);
}

TEST_CASE("downsampling schedule: stride 2 while an axis has factors left") {
  VqVaeConfig c = tiny_cfg();  // factors (4,2,2)
  CHECK(c.num_stages() == 2);
  CHECK(c.stage_stride(0) == Triple{2, 2, 2});
  CHECK(c.stage_stride(1) == Triple{2, 1, 1});
  CHECK(c.stage_kernel(0) == Triple{4, 4, 4});
  CHECK(c.stage_kernel(1) == Triple{4, 3, 3});
}

TEST_CASE("quantize picks the nearest row, ties to the lowest index") {
  VqVae m = two_code_model();

  auto ids = m.quantize(latent_site(0.2f, 0.3f));
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == 0);  // 0.13 vs 1.13

  ids = m.quantize(latent_site(1.0f, 1.0f));
  CHECK(ids[0] == 1);  // exact match, zero residual

  ids = m.quantize(latent_site(0.5f, 0.5f));
  CHECK(ids[0] == 0);  // equidistant, lowest index wins

  // every site beats every other row (exhaustive nearest-neighbor scan)
  Rng rng(7);
  auto z = RTensor::zeros({2, 2, 1, 2, 2});
  for (auto& v : z.values()) v = static_cast<float>(rng.uniform(-1.5, 1.5));
  auto all = m.quantize(z);
  int64_t sites = 4;
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t s = 0; s < sites; ++s) {
      double chosen = 0, other = 0;
      for (int64_t d = 0; d < 2; ++d) {
        double zz = z.data()[(b * 2 + d) * sites + s];
        double dc = zz - m.codebook.data()[all[b * sites + s] * 2 + d];
        double dn = zz - m.codebook.data()[(1 - all[b * sites + s]) * 2 + d];
        chosen += dc * dc;
        other += dn * dn;
      }
      CHECK(chosen <= other);
    }
}

TEST_CASE("loss oracle: one off-grid site against codebook row (0,0)") {
  VqVae m = two_code_model();
  RContext ctx{nullptr, false, nullptr};
  auto z_e = latent_site(0.2f, 0.3f);
  auto ids = m.quantize(z_e);
  auto z_q_raw = m.lookup(ctx, ids, 1, {1, 1, 1});
  auto x = RTensor::full({1, 1, 2, 2, 2}, 0.5f);
  auto l = m.loss(ctx, x, x, z_e, z_q_raw);
  CHECK(l.recon == doctest::Approx(0.0));
  CHECK(l.codebook == doctest::Approx(0.13).epsilon(1e-5));
  CHECK(l.commit == doctest::Approx(0.0325).epsilon(1e-5));
  CHECK(l.total.item() == doctest::Approx(0.1625).epsilon(1e-5));

  // latent exactly on a codebook row: everything vanishes
  auto z1 = latent_site(1.0f, 1.0f);
  auto ids1 = m.quantize(z1);
  auto zq1 = m.lookup(ctx, ids1, 1, {1, 1, 1});
  auto l1 = m.loss(ctx, x, x, z1, zq1);
  CHECK(l1.total.item() == doctest::Approx(0.0));
}

TEST_CASE("straight-through copies the decoder gradient onto z_e bitwise") {
  VqVae m = two_code_model();
  Tape<real> tape;
  RContext ctx{&tape, true, nullptr};
  auto z_e = latent_site(0.2f, 0.3f).set_requires_grad(true);
  m.codebook.set_requires_grad(true);
  auto ids = m.quantize(z_e);
  auto z_q_raw = m.lookup(ctx, ids, 1, {1, 1, 1});
  auto z_q = m.straight_through(ctx, z_e, z_q_raw);

  // forward value is the snapped field
  CHECK(z_q.values()[0] == 0.0f);
  CHECK(z_q.values()[1] == 0.0f);

  auto c = RTensor::from({1, 2, 1, 1, 1}, {0.7f, -1.3f});
  auto loss = ops::sum_all(ctx, ops::mul(ctx, z_q, c));
  tape.backward(loss);

  REQUIRE(z_e.has_grad());
  CHECK(z_e.grad()[0] == 0.7f);   // exactly dL/dz_q, no scaling
  CHECK(z_e.grad()[1] == -1.3f);
  CHECK(!m.codebook.has_grad());  // reconstruction path bypasses the codebook
}

TEST_CASE("stop-gradient routing: pull term trains only the codebook") {
  VqVae m = two_code_model();
  Tape<real> tape;
  RContext ctx{&tape, true, nullptr};
  auto z_e = latent_site(0.2f, 0.3f).set_requires_grad(true);
  m.codebook.set_requires_grad(true);
  auto ids = m.quantize(z_e);
  auto z_q_raw = m.lookup(ctx, ids, 1, {1, 1, 1});

  auto cdiff = ops::sub(ctx, z_q_raw, ops::stop_gradient(ctx, z_e));
  auto pull = ops::sum_all(ctx, ops::mul(ctx, cdiff, cdiff));
  tape.backward(pull);

  CHECK(!z_e.has_grad());  // encoder side is frozen in this term
  REQUIRE(m.codebook.has_grad());
  // gradient of (e - z)^2 w.r.t. the selected row: 2(e - z)
  CHECK(m.codebook.grad()[0] == doctest::Approx(2.0 * (0.0 - 0.2)).epsilon(1e-6));
  CHECK(m.codebook.grad()[1] == doctest::Approx(2.0 * (0.0 - 0.3)).epsilon(1e-6));
  CHECK(m.codebook.grad()[2] == 0.0f);  // unselected row untouched
  CHECK(m.codebook.grad()[3] == 0.0f);
}

TEST_CASE("pull-term gradient step moves a selected row toward its sites' mean") {
  VqVae m = two_code_model();
  Tape<real> tape;
  RContext ctx{&tape, true, nullptr};
  // four sites, all assigned to row 0, clustered around (0.25, 0.35)
  auto z_e = RTensor::from({1, 2, 1, 2, 2},
                           {0.2f, 0.3f, 0.25f, 0.25f, 0.3f, 0.4f, 0.35f, 0.45f});
  m.codebook.set_requires_grad(true);
  auto ids = m.quantize(z_e);
  for (auto id : ids) REQUIRE(id == 0);
  auto z_q_raw = m.lookup(ctx, ids, 1, {1, 2, 2});
  auto cdiff = ops::sub(ctx, z_q_raw, ops::stop_gradient(ctx, z_e));
  auto pull = ops::scale(ctx, ops::sum_all(ctx, ops::mul(ctx, cdiff, cdiff)), 0.25f);
  tape.backward(pull);

  double mean0 = (0.2 + 0.25 + 0.3 + 0.35) / 4.0;
  double mean1 = (0.3 + 0.25 + 0.4 + 0.45) / 4.0;
  float lr = 0.05f;
  double step0 = -lr * m.codebook.grad()[0];
  double step1 = -lr * m.codebook.grad()[1];
  // displacement has positive inner product with (mean - e)
  double ip = step0 * (mean0 - 0.0) + step1 * (mean1 - 0.0);
  CHECK(ip > 0.0);
}

TEST_CASE("desk-scale shapes: (n,1,8,16,16) with factors (4,2,2) -> (n,D,2,8,8)") {
  VqVaeConfig c = tiny_cfg();
  c.width = 8;
  c.code_dim = 16;
  Rng rng(3);
  VqVae m = VqVae::make(c, rng);
  RContext ctx{nullptr, false, nullptr};
  auto x = RTensor::zeros({2, 1, 8, 16, 16});
  auto z_e = m.encode(ctx, x);
  CHECK(z_e.shape() == Shape{2, 16, 2, 8, 8});
  auto ids = m.quantize(z_e);
  CHECK(ids.size() == 2 * 128);  // 128 tokens per item
  auto z_q = m.lookup(ctx, ids, 2, {2, 8, 8});
  auto x_hat = m.decode(ctx, z_q);
  CHECK(x_hat.shape() == Shape{2, 1, 8, 16, 16});
  for (float v : x_hat.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK_THROWS_AS(m.latent_grid({8, 17, 16}), ShapeError);

  auto hist = m.code_histogram(ids);
  int64_t total = 0;
  for (auto h : hist) total += h;
  CHECK(total == static_cast<int64_t>(ids.size()));
}

TEST_CASE("evaluation forward treats batch items independently") {
  VqVaeConfig c = tiny_cfg();
  Rng rng(5);
  VqVae m = VqVae::make(c, rng);
  RContext ctx{nullptr, false, nullptr};

  Rng data(21);
  auto a = RTensor::zeros({1, 1, 4, 8, 8});
  auto b = RTensor::zeros({1, 1, 4, 8, 8});
  for (auto& v : a.values()) v = data.uniform() < 0.3 ? 1.0f : 0.0f;
  for (auto& v : b.values()) v = data.uniform() < 0.3 ? 1.0f : 0.0f;

  auto run = [&](const RTensor& x0, const RTensor& x1) {
    auto x = ops::concat(ctx, {x0, x1}, 0);
    auto z_e = m.encode(ctx, x);
    auto ids = m.quantize(z_e);
    auto z_q = m.lookup(ctx, ids, 2, m.latent_grid({4, 8, 8}));
    return m.decode(ctx, z_q);
  };
  auto ab = run(a, b);
  auto ba = run(b, a);
  int64_t half = ab.numel() / 2;
  for (int64_t i = 0; i < half; ++i) {
    CHECK(ab.data()[i] == ba.data()[half + i]);
    CHECK(ab.data()[half + i] == ba.data()[i]);
  }

  // identical items give identical outputs
  auto aa = run(a, a);
  for (int64_t i = 0; i < half; ++i) CHECK(aa.data()[i] == aa.data()[half + i]);
}

TEST_CASE("a few optimizer steps reduce the training loss") {
  VqVaeConfig c = tiny_cfg();
  Rng rng(11);
  VqVae m = VqVae::make(c, rng);

  NamedTensors params, buffers;
  m.collect("vqvae", params, buffers);
  for (auto& [name, t] : params.items) t.set_requires_grad(true);
  AdamConfig<real> ac;
  ac.lr = 3e-4f;
  Adam<real> opt(params.tensors(), ac);

  Rng data(33);
  auto x = RTensor::zeros({2, 1, 4, 8, 8});
  for (auto& v : x.values()) v = data.uniform() < 0.3 ? 1.0f : 0.0f;

  double first = 0, last = 0;
  for (int it = 0; it < 10; ++it) {
    Tape<real> tape;
    RContext ctx{&tape, true, &data};
    auto f = m.train_forward(ctx, x);
    if (it == 0) first = f.losses.total.item();
    last = f.losses.total.item();
    CHECK(f.losses.recon >= 0.0);
    CHECK(f.losses.codebook >= 0.0);
    CHECK(f.losses.commit >= 0.0);
    tape.backward(f.losses.total);
    opt.step();
  }
  CHECK(last < first);
}
