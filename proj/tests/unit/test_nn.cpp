#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "vpure/diffusion/denoiser.hpp"
#include "vpure/nn/layers.hpp"
#include "vpure/nn/optim.hpp"
#include "vpure/nn/serialize.hpp"
#include "vpure/refiner/score_model.hpp"

using namespace vpure;
using namespace vpure::nn;

namespace {

Tensor random_tensor(int c, int h, int w, Rng& rng) {
  Tensor t(c, h, w);
  std::normal_distribution<float> nd;
  for (auto& v : t.v) v = nd(rng);
  return t;
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  std::normal_distribution<float> nd;
  for (auto& x : v) x = nd(rng);
  return v;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// Compares analytic parameter gradients with central differences of `loss`
// on a strided subset of each parameter.
void check_param_grads(const std::vector<Param*>& params, const std::function<double()>& loss,
                       double h = 1e-2, double tol = 2e-2) {
  for (auto* p : params) {
    const std::size_t stride = std::max<std::size_t>(1, p->size() / 7);
    for (std::size_t i = 0; i < p->size(); i += stride) {
      const float saved = p->value[i];
      p->value[i] = saved + static_cast<float>(h);
      const double up = loss();
      p->value[i] = saved - static_cast<float>(h);
      const double down = loss();
      p->value[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      INFO(p->name << "[" << i << "] analytic " << p->grad[i] << " fd " << fd);
      CHECK(std::abs(p->grad[i] - fd) <= tol * std::max(1.0, std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("Conv1d gradients match finite differences") {
  Rng rng(1);
  Conv1d conv("c", 3, 4, 3, 2);
  conv.init(rng);
  const auto x = random_tensor(3, 1, 17, rng);
  const auto r = random_tensor(4, 1, 17, rng);
  std::vector<Param*> ps;
  conv.collect(ps);
  for (auto* p : ps) p->zero_grad();
  const auto gx = conv.backward(x, r);
  check_param_grads(ps, [&] { return dot(conv.forward(x).v, r.v); });
  // Input gradient.
  for (std::size_t i = 0; i < x.size(); i += 5) {
    auto xp = x, xm = x;
    xp.v[i] += 1e-2f;
    xm.v[i] -= 1e-2f;
    const double fd = (dot(conv.forward(xp).v, r.v) - dot(conv.forward(xm).v, r.v)) / 2e-2;
    CHECK(gx.v[i] == doctest::Approx(fd).epsilon(2e-2));
  }
}

TEST_CASE("Conv2d gradients match finite differences") {
  Rng rng(2);
  Conv2d conv("c", 2, 3, 3);
  conv.init(rng);
  const auto x = random_tensor(2, 6, 5, rng);
  const auto r = random_tensor(3, 6, 5, rng);
  std::vector<Param*> ps;
  conv.collect(ps);
  for (auto* p : ps) p->zero_grad();
  const auto gx = conv.backward(x, r);
  check_param_grads(ps, [&] { return dot(conv.forward(x).v, r.v); });
  for (std::size_t i = 0; i < x.size(); i += 3) {
    auto xp = x, xm = x;
    xp.v[i] += 1e-2f;
    xm.v[i] -= 1e-2f;
    const double fd = (dot(conv.forward(xp).v, r.v) - dot(conv.forward(xm).v, r.v)) / 2e-2;
    CHECK(gx.v[i] == doctest::Approx(fd).epsilon(2e-2));
  }
}

TEST_CASE("Linear and silu gradients") {
  Rng rng(3);
  Linear lin("l", 5, 4);
  lin.init(rng);
  const auto x = random_vec(5, rng);
  const auto r = random_vec(4, rng);
  std::vector<Param*> ps;
  lin.collect(ps);
  for (auto* p : ps) p->zero_grad();
  lin.backward(x, r);
  check_param_grads(ps, [&] { return dot(lin.forward(x), r); });

  for (float v : {-3.0f, -0.5f, 0.0f, 0.7f, 4.0f}) {
    const double fd = (silu(v + 1e-3f) - silu(v - 1e-3f)) / 2e-3;
    CHECK(silu_grad(v) == doctest::Approx(fd).epsilon(1e-2));
  }
}

TEST_CASE("pooling and upsampling are adjoint pairs on odd shapes") {
  Rng rng(4);
  const auto x = random_tensor(2, 7, 5, rng);
  const auto pooled = avg_pool2(x);
  CHECK(pooled.h == 4);
  CHECK(pooled.w == 3);
  const auto g = random_tensor(2, 4, 3, rng);
  // <pool(x), g> == <x, pool^T(g)>
  CHECK(dot(pooled.v, g.v) == doctest::Approx(dot(x.v, avg_pool2_backward(x, g).v)).epsilon(1e-5));
  const auto up = upsample2(g, 7, 5);
  const auto gu = random_tensor(2, 7, 5, rng);
  CHECK(dot(up.v, gu.v) == doctest::Approx(dot(g.v, upsample2_backward(gu, 4, 3).v)).epsilon(1e-5));
  // Corner cell of an odd edge averages only the cells that exist.
  CHECK(pooled.at(0, 3, 2) == doctest::Approx(x.at(0, 6, 4)));
}

TEST_CASE("WaveDenoiser backward matches finite differences") {
  diffusion::DenoiserArch arch{.channels = 4, .blocks = 2, .dilation_cycle = 2, .embed_dim = 8};
  diffusion::WaveDenoiser model(arch, 3);
  Rng rng(5);
  auto ps = model.parameters();
  for (auto* p : ps) {
    std::normal_distribution<float> nd(0.0f, 0.3f);
    for (auto& v : p->value) v = nd(rng);
  }
  const auto x = random_vec(40, rng);
  const auto r = random_vec(40, rng);
  diffusion::WaveDenoiser::Cache cache;
  model.forward(x, 7, cache);
  for (auto* p : ps) p->zero_grad();
  model.backward(cache, r);
  check_param_grads(ps, [&] {
    diffusion::WaveDenoiser::Cache c;
    return dot(model.forward(x, 7, c), r);
  });
}

TEST_CASE("ScoreUNet backward matches finite differences") {
  refiner::ScoreNetArch arch;
  arch.channels = 2;
  arch.embed_dim = 4;
  refiner::ScoreUNet model(arch, {}, 4);
  Rng rng(6);
  auto ps = model.parameters();
  for (auto* p : ps) {
    std::normal_distribution<float> nd(0.0f, 0.3f);
    for (auto& v : p->value) v = nd(rng);
  }
  const auto x = random_tensor(5, 5, 7, rng);
  const auto r = random_tensor(2, 5, 7, rng);
  refiner::ScoreUNet::Cache cache;
  model.forward(x, 0.4, cache);
  for (auto* p : ps) p->zero_grad();
  model.backward(cache, r);
  check_param_grads(ps, [&] {
    refiner::ScoreUNet::Cache c;
    return dot(model.forward(x, 0.4, c).v, r.v);
  });
}

TEST_CASE("Adam minimises a quadratic") {
  Param p("p", {3});
  p.value = {3.0f, -2.0f, 0.5f};
  Adam adam({&p}, {.lr = 0.05});
  for (int it = 0; it < 400; ++it) {
    adam.zero_grad();
    for (int i = 0; i < 3; ++i) p.grad[i] = 2.0f * (p.value[i] - 1.0f);
    adam.step();
  }
  for (float v : p.value) CHECK(v == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("parameter serialisation round trip and mismatch detection") {
  Rng rng(7);
  Linear a("a", 3, 2), b("a", 3, 2), c("c", 3, 2);
  a.init(rng);
  std::vector<Param*> pa, pb, pc;
  a.collect(pa);
  b.collect(pb);
  c.collect(pc);
  const auto dir = testutil::temp_dir("serialize");
  write_container(dir / "p.bin", {{"format", "test"}, {"version", 1}, {"params", params_to_json(pa)}});
  const auto doc = read_container(dir / "p.bin", "test", 1);
  params_from_json(doc.at("params"), pb);
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->value == pb[k]->value);
  CHECK(testutil::error_kind([&] { params_from_json(doc.at("params"), pc); }) ==
        ErrorKind::kCheckpointMismatch);
  CHECK(testutil::error_kind([&] { read_container(dir / "p.bin", "other", 1); }) ==
        ErrorKind::kFormat);
}

TEST_CASE("sinusoidal embedding shape and range") {
  const auto e = sinusoidal_embedding(12.0, 8);
  REQUIRE(e.size() == 8);
  for (float v : e) CHECK(std::abs(v) <= 1.0f);
  CHECK(sinusoidal_embedding(12.0, 8) == e);
}
