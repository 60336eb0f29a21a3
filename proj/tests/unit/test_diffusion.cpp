#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "vpure/diffusion/purifier.hpp"
#include "vpure/diffusion/schedule.hpp"

using namespace vpure;
using namespace vpure::diffusion;
using testutil::error_kind;

namespace {

class ZeroPredictor : public NoisePredictor {
 public:
  std::vector<double> predict_noise(std::span<const double> x, int) const override {
    return std::vector<double>(x.size(), 0.0);
  }
};

// Exact E[eps | x_t] for scalar data x0 ~ N(mu, s^2).
class GaussianOptimal : public NoisePredictor {
 public:
  GaussianOptimal(const NoiseSchedule& s, double mu, double sd) : s_(s), mu_(mu), sd_(sd) {}
  std::vector<double> predict_noise(std::span<const double> x, int t) const override {
    const double ab = s_.alpha_bar(t);
    const double var = ab * sd_ * sd_ + (1.0 - ab);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = std::sqrt(1.0 - ab) * (x[i] - std::sqrt(ab) * mu_) / var;
    }
    return out;
  }

 private:
  const NoiseSchedule& s_;
  double mu_, sd_;
};

std::vector<audio::Waveform> sinusoid_corpus(int n, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> f(150.0, 600.0), a(0.2, 0.6), ph(0.0, 6.28);
  std::vector<audio::Waveform> out;
  for (int i = 0; i < n; ++i) out.push_back(testutil::sine(len, f(rng), a(rng), ph(rng)));
  return out;
}

}  // namespace

TEST_CASE("build_schedule examples") {
  const auto one = build_schedule(1, 0.1, 0.1);
  CHECK(one.betas == std::vector<double>{0.1});
  CHECK(one.alphas_bar[0] == doctest::Approx(0.9).epsilon(1e-15));

  const auto s = build_schedule(50, 1e-4, 0.05);
  double prod = 1.0;
  for (int t = 1; t <= 50; ++t) {
    const double beta = 1e-4 + (t - 1) / 49.0 * (0.05 - 1e-4);
    CHECK(s.beta(t) == doctest::Approx(beta).epsilon(1e-12));
    prod *= 1.0 - beta;
    CHECK(std::abs(s.alpha_bar(t) - prod) < 1e-10);
  }
  CHECK(s.alpha_bar(0) == 1.0);

  CHECK(error_kind([] { build_schedule(10, 1e-4, 1.0); }) == ErrorKind::kInvalidInput);
  CHECK(error_kind([] { build_schedule(10, 0.0, 0.1); }) == ErrorKind::kInvalidInput);
  CHECK(error_kind([] { build_schedule(10, 0.2, 0.1); }) == ErrorKind::kInvalidInput);
  CHECK(error_kind([] { build_schedule(0, 0.1, 0.1); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("schedule invariants hold for several configurations") {
  for (auto [t, b0, b1] : {std::tuple{50, 1e-4, 0.05}, {200, 1e-4, 0.02}, {7, 0.01, 0.01}}) {
    const auto s = build_schedule(t, b0, b1);
    for (int k = 1; k <= t; ++k) {
      CHECK(s.beta(k) > 0.0);
      CHECK(s.beta(k) < 1.0);
      if (k > 1) {
        CHECK(s.beta(k) >= s.beta(k - 1));
        CHECK(s.alpha_bar(k) < s.alpha_bar(k - 1));
      }
    }
    CHECK(s.posterior_variance(1) == 0.0);
    CHECK(s.posterior_variance(t) ==
          doctest::Approx(s.beta(t) * (1 - s.alpha_bar(t - 1)) / (1 - s.alpha_bar(t))));
  }
}

TEST_CASE("forward_diffuse examples") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  const std::vector<double> x0{0.3, -0.2, 0.9};
  const auto y = forward_diffuse(x0, 10, std::vector<double>(3, 0.0), s);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == std::sqrt(s.alpha_bar(10)) * x0[i]);
  CHECK(error_kind([&] { forward_diffuse(x0, 10, std::vector<double>(2, 0.0), s); }) ==
        ErrorKind::kInvalidInput);
  CHECK(error_kind([&] { forward_diffuse(x0, 51, std::vector<double>(3, 0.0), s); }) ==
        ErrorKind::kInvalidInput);

  // A schedule whose final alpha_bar is essentially zero.
  const auto deep = build_schedule(1000, 1e-4, 0.02);
  Rng rng(3);
  const auto x = testutil::white_noise(4000, 4, 0.8).samples;
  const auto noise = normal_vector(rng, x.size());
  const auto xt = forward_diffuse(x, 1000, noise, deep);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * xt[i];
    sxx += x[i] * x[i];
    syy += xt[i] * xt[i];
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.1);
}

TEST_CASE("expected energy of forward_diffuse") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  const std::vector<double> x0{0.5, -0.4, 0.1, 0.8};
  const double e0 = 0.5 * 0.5 + 0.4 * 0.4 + 0.1 * 0.1 + 0.8 * 0.8;
  Rng rng(9);
  for (int t : {1, 10, 50}) {
    double acc = 0.0;
    const int trials = 20000;
    for (int k = 0; k < trials; ++k) {
      const auto xt = forward_diffuse(x0, t, normal_vector(rng, 4), s);
      for (double v : xt) acc += v * v;
    }
    const double expect = s.alpha_bar(t) * e0 + (1.0 - s.alpha_bar(t)) * 4.0;
    CHECK(acc / trials == doctest::Approx(expect).epsilon(0.02));
  }
}

TEST_CASE("reverse_step formula reductions") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  const ZeroPredictor zero;
  const std::vector<double> x{0.2, -0.7};
  const auto y = reverse_step(x, 20, zero, s, std::vector<double>(2, 0.0));
  for (int i = 0; i < 2; ++i) CHECK(y[i] == doctest::Approx(x[i] / std::sqrt(1 - s.beta(20))));

  const auto a = reverse_step(x, 1, zero, s, std::vector<double>{5.0, -5.0});
  const auto b = reverse_step(x, 1, zero, s, std::vector<double>{0.0, 0.0});
  CHECK(a == b);

  CHECK(error_kind([&] { reverse_step(x, 0, zero, s, x); }) == ErrorKind::kInvalidInput);
  CHECK(error_kind([&] { reverse_step(x, 51, zero, s, x); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("reverse sampling with the analytic predictor recovers Gaussian data") {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  const double mu = 0.5, sd = 0.3;
  const GaussianOptimal model(s, mu, sd);
  Rng rng(17);
  const std::size_t runs = 4000;
  auto x = normal_vector(rng, runs);
  for (int t = s.t_max(); t >= 1; --t) x = reverse_step(x, t, model, s, normal_vector(rng, runs));
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / runs;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= runs - 1;
  CHECK(mean == doctest::Approx(mu).epsilon(0.05));
  CHECK(var == doctest::Approx(sd * sd).epsilon(0.08));
}

TEST_CASE("purify contracts") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  const ZeroPredictor zero;
  const auto x = testutil::white_noise(35000, 5);
  CHECK(purify(x, zero, s, {.t_pur = 0}, 1).samples == x.samples);

  const auto a = purify(x, zero, s, {.t_pur = 3}, 42);
  const auto b = purify(x, zero, s, {.t_pur = 3}, 42);
  const auto c = purify(x, zero, s, {.t_pur = 3}, 43);
  CHECK(a.size() == x.size());
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  for (double v : a.samples) CHECK(std::abs(v) <= 1.0);

  // Chunks draw independent streams: the first chunk does not depend on the rest.
  const audio::Waveform head(std::vector<double>(x.samples.begin(), x.samples.begin() + 16000));
  const auto h = purify(head, zero, s, {.t_pur = 3}, 42);
  CHECK(std::equal(h.samples.begin(), h.samples.end(), a.samples.begin()));

  CHECK(error_kind([&] { purify(x, zero, s, {.t_pur = 51}, 1); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("train_purifier rejects an empty dataset") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  CHECK(error_kind([&] { train_purifier({}, s, {}); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("train_purifier is deterministic and learns on sinusoids") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  const auto corpus = sinusoid_corpus(100, 2048, 1);
  PurifierTrainingConfig cfg;
  cfg.epochs = 8;
  cfg.crop_len = 1024;
  cfg.seed = 7;
  cfg.arch = {.channels = 8, .blocks = 4, .dilation_cycle = 4, .embed_dim = 16};
  const auto r1 = train_purifier(corpus, s, cfg);
  // Shift later heap addresses; results must not depend on buffer alignment.
  std::vector<std::vector<char>> shift{std::vector<char>(48), std::vector<char>(4004)};
  const auto r2 = train_purifier(corpus, s, cfg);
  REQUIRE(r1.epoch_loss.size() == 8);
  CHECK(r1.epoch_loss == r2.epoch_loss);
  MESSAGE("purifier loss " << r1.epoch_loss.front() << " -> " << r1.epoch_loss.back());
  CHECK(r1.epoch_loss.back() <= 0.5 * r1.epoch_loss.front());
}

TEST_CASE("purifier trained on silence pulls the reverse chain to zero") {
  const auto s = build_schedule(50, 1e-4, 0.05);
  std::vector<audio::Waveform> zeros(20, audio::Waveform(std::vector<double>(2048, 0.0)));
  PurifierTrainingConfig cfg;
  cfg.epochs = 100;
  cfg.crop_len = 1024;
  cfg.seed = 3;
  cfg.arch = {.channels = 8, .blocks = 4, .dilation_cycle = 4, .embed_dim = 16};
  const auto r = train_purifier(zeros, s, cfg);
  const auto out = purify(audio::Waveform(std::vector<double>(4000, 0.0)), r.model, s,
                          {.t_pur = 50}, 11);
  double m = 0.0;
  for (double v : out.samples) m += std::abs(v);
  m /= static_cast<double>(out.size());
  MESSAGE("mean |purify(0)| " << m);
  CHECK(m < 0.05);
}

TEST_CASE("purifier checkpoint round trip") {
  const auto s = build_schedule(20, 1e-4, 0.05);
  WaveDenoiser model({.channels = 4, .blocks = 2, .dilation_cycle = 2, .embed_dim = 8}, 5);
  const auto dir = testutil::temp_dir("purifier_ckpt");
  save_purifier(dir / "p.ckpt", model, s, {.t_pur = 4});
  const auto ck = load_purifier(dir / "p.ckpt");
  CHECK(ck.settings.t_pur == 4);
  CHECK(ck.schedule.fingerprint() == s.fingerprint());
  const auto x = testutil::white_noise(300, 1).samples;
  CHECK(ck.model.predict_noise(x, 3) == model.predict_noise(x, 3));
}
