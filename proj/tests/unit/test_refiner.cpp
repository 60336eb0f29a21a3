#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "vpure/pipeline/synth.hpp"
#include "vpure/refiner/ou_sde.hpp"
#include "vpure/refiner/refiner.hpp"
#include "vpure/refiner/score_model.hpp"

using namespace vpure;
using namespace vpure::refiner;
using testutil::error_kind;

namespace {

class ZeroScore : public ScoreEstimator {
 public:
  std::vector<Complex> score(std::span<const Complex> m, const ScoreCondition&, double) const override {
    return std::vector<Complex>(m.size());
  }
};

// Exact score of the perturbed marginal when m0 ~ N_C(y + delta, v0) per element.
class GaussianTargetScore : public ScoreEstimator {
 public:
  GaussianTargetScore(const OUSDEParams& p, Complex delta, double v0) : p_(p), delta_(delta), v0_(v0) {}
  std::vector<Complex> score(std::span<const Complex> m, const ScoreCondition& cond,
                             double tau) const override {
    const double e = std::exp(-p_.gamma * tau);
    const double s = ou_sigma(tau, p_);
    const double var = e * e * v0_ + s * s;
    std::vector<Complex> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      const Complex mean = cond.m_pur[i] + e * delta_;
      out[i] = -(m[i] - mean) / var;
    }
    return out;
  }

 private:
  OUSDEParams p_;
  Complex delta_;
  double v0_;
};

audio::ComplexSpectrogram warped_spec(int frames, std::uint64_t seed) {
  audio::ComplexSpectrogram s(audio::SpectrogramConfig{}, frames);
  Rng rng(seed);
  std::normal_distribution<double> nd;
  for (auto& z : s.data) z = {1.0 + 0.3 * nd(rng), 0.3 * nd(rng)};
  s.warped = true;
  return s;
}

phoneme::PhonemeRepresentation flat_lambda(int frames, double v = 1.0) {
  return {256, frames, std::vector<double>(static_cast<std::size_t>(256) * frames, v)};
}

double variance_ode_rk4(double tau_end, const OUSDEParams& p) {
  const int steps = 20000;
  const double h = tau_end / steps;
  auto f = [&](double t, double v) { return -2.0 * p.gamma * v + std::pow(p.diffusion(t), 2); };
  double v = 0.0, t = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double k1 = f(t, v), k2 = f(t + h / 2, v + h / 2 * k1), k3 = f(t + h / 2, v + h / 2 * k2),
                 k4 = f(t + h, v + h * k3);
    v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += h;
  }
  return v;
}

}  // namespace

TEST_CASE("OU-SDE parameter validation") {
  OUSDEParams p;
  CHECK_NOTHROW(p.validate());
  p.sigma_min = 0.6;
  CHECK(error_kind([&] { p.validate(); }) == ErrorKind::kInvalidInput);
  p = {};
  p.tau_eps = 1.5;
  CHECK(error_kind([&] { p.validate(); }) == ErrorKind::kInvalidInput);
  p = {};
  p.gamma = 0.0;
  CHECK(error_kind([&] { p.validate(); }) == ErrorKind::kInvalidInput);
  const auto back = OUSDEParams::from_json(OUSDEParams{}.to_json());
  CHECK(back.to_json() == OUSDEParams{}.to_json());
}

TEST_CASE("ou_mean examples") {
  const OUSDEParams p;
  const std::vector<Complex> m0{{1.0, 2.0}, {-0.5, 0.1}}, y{{0.3, -0.2}, {2.0, 0.0}};
  CHECK(ou_mean(m0, y, 0.0, p) == m0);
  const auto far = ou_mean(m0, y, 50.0, p);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(far[i] - y[i]) < 1e-6);

  const std::vector<Complex> one{1.0}, zero{0.0};
  const double expect = std::exp(-0.75);
  CHECK(ou_mean(one, zero, 0.5, p)[0].real() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(0.47237).epsilon(1e-5));
  // Noiseless ODE dm = gamma (y - m) dtau, forward Euler.
  double m = 1.0;
  for (int k = 0; k < 500000; ++k) m += 1.5 * (0.0 - m) * 1e-6;
  CHECK(m == doctest::Approx(expect).epsilon(1e-5));

  CHECK(error_kind([&] { ou_mean(m0, one, 0.5, p); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("ou_sigma matches the variance ODE") {
  const OUSDEParams p;
  CHECK(ou_sigma(0.0, p) == 0.0);
  for (double tau : {0.25, 0.5, 1.0}) {
    const double closed = std::pow(ou_sigma(tau, p), 2);
    CHECK(std::abs(closed - variance_ode_rk4(tau, p)) <= 1e-4 * closed);
  }
}

TEST_CASE("ou moments match Euler-Maruyama simulation") {
  const OUSDEParams p;
  Rng rng(12);
  std::normal_distribution<double> nd;
  const int paths = 10000;
  const double dt = 1e-3;
  std::vector<double> m(paths, 1.0);  // m0 = 1, y = 0, real-valued SDE
  double tau = 0.0;
  for (int k = 0; k < 500; ++k) {
    const double g = p.diffusion(tau);
    for (auto& v : m) v += p.gamma * (0.0 - v) * dt + g * std::sqrt(dt) * nd(rng);
    tau += dt;
  }
  const double mean = std::accumulate(m.begin(), m.end(), 0.0) / paths;
  double var = 0.0;
  for (double v : m) var += (v - mean) * (v - mean);
  var /= paths - 1;
  CHECK(mean == doctest::Approx(std::exp(-1.5 * 0.5)).epsilon(0.02));
  CHECK(std::sqrt(var) == doctest::Approx(ou_sigma(0.5, p)).epsilon(0.02));
}

TEST_CASE("forward_perturb examples") {
  const OUSDEParams p;
  Rng rng(2);
  const auto m0 = complex_normal_vector(rng, 50), y = complex_normal_vector(rng, 50);
  const auto z = complex_normal_vector(rng, 50);
  CHECK(forward_perturb(m0, y, 0.4, std::vector<Complex>(50), p) == ou_mean(m0, y, 0.4, p));
  CHECK(forward_perturb(m0, y, 0.0, z, p) == m0);
  CHECK(error_kind([&] { forward_perturb(m0, y, 0.4, std::vector<Complex>(3), p); }) ==
        ErrorKind::kInvalidInput);

  const int draws = 10000;
  const std::vector<Complex> a{Complex(0.5, -0.5)}, b{Complex(0.0, 1.0)};
  double s2 = 0.0;
  Complex mean{};
  std::vector<Complex> vals;
  for (int k = 0; k < draws; ++k) {
    const auto v = forward_perturb(a, b, 0.5, complex_normal_vector(rng, 1), p)[0];
    vals.push_back(v);
    mean += v;
  }
  mean /= static_cast<double>(draws);
  for (const auto& v : vals) s2 += std::norm(v - mean);
  CHECK(s2 / (draws - 1) == doctest::Approx(std::pow(ou_sigma(0.5, p), 2)).epsilon(0.03));
}

TEST_CASE("complex normal convention") {
  Rng rng(5);
  const auto z = complex_normal_vector(rng, 200000);
  double re = 0.0, im = 0.0;
  for (const auto& v : z) {
    re += v.real() * v.real();
    im += v.imag() * v.imag();
  }
  CHECK(re / z.size() == doctest::Approx(0.5).epsilon(0.02));
  CHECK(im / z.size() == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("dsm_loss examples") {
  Rng rng(3);
  const auto z = complex_normal_vector(rng, 40);
  std::vector<Complex> opt(40);
  for (int i = 0; i < 40; ++i) opt[i] = -z[i] / 0.7;
  CHECK(dsm_loss(opt, z, 0.7) == 0.0);
  auto off = opt;
  off[3] += 1e-3;
  CHECK(dsm_loss(off, z, 0.7) > 0.0);

  std::vector<Complex> unit(10);
  for (int i = 0; i < 10; ++i) unit[i] = std::polar(1.0, 0.3 * i);
  CHECK(dsm_loss(std::vector<Complex>(10), unit, 0.5) == doctest::Approx(4.0));
  CHECK(error_kind([&] { dsm_loss(opt, z, 0.0); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("dsm_loss gradient of a two-parameter linear score model") {
  // s = a m_tau + b y; analytic d/da, d/db of mean |s + z/sigma|^2.
  const OUSDEParams p;
  Rng rng(8);
  const std::size_t n = 64;
  const auto m0 = complex_normal_vector(rng, n), y = complex_normal_vector(rng, n);
  const auto z = complex_normal_vector(rng, n);
  const double tau = 0.6, sigma = ou_sigma(tau, p);
  const auto mt = forward_perturb(m0, y, tau, z, p);
  auto loss = [&](double a, double b) {
    std::vector<Complex> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = a * mt[i] + b * y[i];
    return dsm_loss(s, z, sigma);
  };
  const double a = -1.3, b = 0.4;
  double ga = 0.0, gb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Complex r = a * mt[i] + b * y[i] + z[i] / sigma;
    ga += 2.0 * (std::conj(r) * mt[i]).real() / n;
    gb += 2.0 * (std::conj(r) * y[i]).real() / n;
  }
  const double h = 1e-5;
  const double fa = (loss(a + h, b) - loss(a - h, b)) / (2 * h);
  const double fb = (loss(a, b + h) - loss(a, b - h)) / (2 * h);
  CHECK(std::abs(ga - fa) <= 1e-3 * std::abs(fa));
  CHECK(std::abs(gb - fb) <= 1e-3 * std::abs(fb));
}

TEST_CASE("training loss is the DSM objective and backprop matches finite differences") {
  ScoreNetArch arch;
  arch.channels = 2;
  arch.embed_dim = 4;
  arch.residual_std = 0.3;
  ScoreUNet model(arch, {}, 1);
  Rng rng(4);
  for (auto* p : model.parameters()) {
    std::normal_distribution<float> nd(0.0f, 0.2f);
    for (auto& v : p->value) v = nd(rng);
  }
  const int bins = 6, frames = 5;
  const std::size_t plane = bins * frames;
  auto m0 = complex_normal_vector(rng, plane), y = complex_normal_vector(rng, plane);
  for (auto& v : m0) v *= 0.2;
  for (auto& v : y) v *= 0.2;
  std::vector<double> lam(plane, 0.1);
  const auto z = complex_normal_vector(rng, plane);
  for (double tau : {0.05, 0.4, 1.0}) {
    const DsmSample sample{bins, frames, m0, y, lam, z, {}, tau};
    const double plain = dsm_training_loss(model, sample, LossWeighting::kNone, false);
    const auto m_tau = forward_perturb(m0, y, tau, z, model.sde());
    const ScoreCondition cond{bins, frames, y, lam};
    const double direct = dsm_loss(model.score(m_tau, cond, tau), z, ou_sigma(tau, model.sde()));
    CHECK(plain == doctest::Approx(direct).epsilon(1e-5));
  }

  const DsmSample sample{bins, frames, m0, y, lam, z, {}, 0.3};
  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  dsm_training_loss(model, sample, LossWeighting::kPreconditioned, true);
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); i += std::max<std::size_t>(1, p->size() / 5)) {
      const float saved = p->value[i];
      p->value[i] = saved + 1e-2f;
      const double up = dsm_training_loss(model, sample, LossWeighting::kPreconditioned, false);
      p->value[i] = saved - 1e-2f;
      const double down = dsm_training_loss(model, sample, LossWeighting::kPreconditioned, false);
      p->value[i] = saved;
      const double fd = (up - down) / 2e-2;
      INFO(p->name << "[" << i << "]");
      CHECK(std::abs(p->grad[i] - fd) <= 2e-2 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("sampler recovers a Gaussian target with the analytic score") {
  const OUSDEParams p;
  const Complex delta(0.3, -0.2);  // state units
  const double v0 = 0.01;
  const GaussianTargetScore model(p, delta, v0);
  const auto m_pur = warped_spec(2, 1);
  const auto lam = flat_lambda(2);
  const int runs = 1000;
  Complex mean{};
  double var = 0.0;
  std::vector<Complex> diffs;
  for (int r = 0; r < runs; ++r) {
    const auto out = refine(m_pur, lam, model, p, {}, derive_seed(9, "run", r));
    for (std::size_t i = 0; i < out.size(); i += 37) {
      const Complex d = (out.data[i] - m_pur.data[i]) * p.state_scale;
      diffs.push_back(d);
      mean += d;
    }
  }
  mean /= static_cast<double>(diffs.size());
  for (const auto& d : diffs) var += std::norm(d - mean);
  var /= static_cast<double>(diffs.size() - 1);
  MESSAGE("target offset " << delta << " sampled " << mean << " var " << var);
  CHECK(std::abs(mean - delta) <= 0.05 * std::abs(delta));
  CHECK(var == doctest::Approx(v0).epsilon(0.25));
}

TEST_CASE("zero score model: shape, termination, determinism and predictor noise level") {
  const OUSDEParams p;
  const ZeroScore zero;
  const auto m_pur = warped_spec(4, 2);
  const auto lam = flat_lambda(4);
  for (int n : {1, 30}) {
    SamplerSettings s;
    s.n_steps = n;
    s.init_noise = false;
    const auto a = refine(m_pur, lam, zero, p, s, 5);
    const auto b = refine(m_pur, lam, zero, p, s, 5);
    CHECK(a.n_bins == m_pur.n_bins);
    CHECK(a.n_frames == m_pur.n_frames);
    CHECK(a.warped);
    CHECK(a.data == b.data);
    // With s = 0 each reverse step maps m - y to (1 + gamma dt)(m - y) plus
    // fresh noise, so E|m - y|^2 follows a scalar linear recursion.
    const double dt = (p.t_max - p.tau_eps) / n;
    double expect = 0.0;
    for (int k = 0; k < n; ++k) {
      expect = std::pow(1.0 + p.gamma * dt, 2) * expect + std::pow(p.diffusion(p.t_max - k * dt), 2) * dt;
    }
    double got = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) got += std::norm((a.data[i] - m_pur.data[i]) * p.state_scale);
    got /= static_cast<double>(a.size());
    if (n == 30) CHECK(got == doctest::Approx(expect).epsilon(0.1));
  }
  CHECK(refine(m_pur, lam, zero, p, {}, 1).data != refine(m_pur, lam, zero, p, {}, 2).data);
}

TEST_CASE("refine input checks") {
  const OUSDEParams p;
  const ZeroScore zero;
  auto unwarped = warped_spec(3, 1);
  unwarped.warped = false;
  CHECK(error_kind([&] { refine(unwarped, flat_lambda(3), zero, p, {}, 1); }) == ErrorKind::kState);
  CHECK(error_kind([&] { refine(warped_spec(3, 1), flat_lambda(4), zero, p, {}, 1); }) ==
        ErrorKind::kInvalidInput);
  SamplerSettings bad;
  bad.n_steps = 0;
  CHECK(error_kind([&] { refine(warped_spec(3, 1), flat_lambda(3), zero, p, bad, 1); }) ==
        ErrorKind::kInvalidInput);
}

TEST_CASE("conditioning channels are not modified by sampling") {
  struct Recorder : ScoreEstimator {
    mutable std::vector<std::vector<Complex>> seen;
    mutable std::vector<std::vector<double>> lam;
    std::vector<Complex> score(std::span<const Complex> m, const ScoreCondition& c, double) const override {
      seen.emplace_back(c.m_pur.begin(), c.m_pur.end());
      lam.emplace_back(c.lambda.begin(), c.lambda.end());
      return std::vector<Complex>(m.size(), Complex(0.01, 0.0));
    }
  } rec;
  refine(warped_spec(2, 3), flat_lambda(2, 4.0), rec, {}, {}, 1);
  REQUIRE(rec.seen.size() == 30 * 2 + 1);
  for (std::size_t k = 1; k < rec.seen.size(); ++k) {
    CHECK(rec.seen[k] == rec.seen[0]);
    CHECK(rec.lam[k] == rec.lam[0]);
  }
  CHECK(rec.lam[0][0] == doctest::Approx(0.15 * 2.0));
}

TEST_CASE("refine_waveform identity path and length") {
  const OUSDEParams p;
  const ZeroScore zero;
  SamplerSettings s;
  s.n_steps = 1;
  s.init_noise = false;
  s.t_ref = p.tau_eps;  // collapse the reverse interval: no predictor noise
  const auto x = testutil::white_noise(14321, 4, 0.5);
  const RefineRequest req{nullptr, nullptr, PhonemeGuidance::kZero};
  const auto y = refine_waveform(x, req, zero, p, s, 3);
  REQUIRE(y.size() == x.size());
  CHECK(testutil::snr_db(x.samples, y.samples) >= 40.0);

  const auto full = refine_waveform(x, req, zero, p, {}, 3);
  CHECK(full.size() == x.size());
  for (double v : full.samples) CHECK(std::abs(v) <= 1.0);

  const RefineRequest aligned{nullptr, nullptr, PhonemeGuidance::kAligned};
  CHECK(error_kind([&] { refine_waveform(x, aligned, zero, p, s, 3); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("training pairs share shape and normalisation") {
  const auto spk = pipeline::make_speakers(2, 1);
  const auto clip = pipeline::synth_utterance(spk[0], 3, 1.0);
  std::vector<phoneme::AlignedUtterance> corpus{{clip.wave, clip.transcript}};
  const auto dict = phoneme::build_dictionary(corpus);
  audio::Waveform pur = clip.wave;
  for (auto& v : pur.samples) v *= 0.5;
  const auto pair = make_training_pair(clip.wave, pur, clip.transcript, dict);
  CHECK(pair.clean.warped);
  CHECK(pair.purified.warped);
  CHECK(pair.clean.n_frames == pair.purified.n_frames);
  CHECK(pair.phoneme_rep.n_frames == pair.clean.n_frames);
  // Both normalised by the purified peak: clean is exactly twice purified before warping.
  for (std::size_t i = 0; i < pair.clean.size(); i += 97) {
    CHECK(std::abs(pair.clean.data[i] - std::sqrt(2.0) * pair.purified.data[i]) < 1e-9);
  }
}

namespace {

// Purified = half the clean signal: the residual is predictable from m_pur.
std::vector<TrainingPair> scaled_pairs(int n, std::uint64_t seed) {
  const auto spk = pipeline::make_speakers(2, seed);
  std::vector<pipeline::SynthClip> clips;
  std::vector<phoneme::AlignedUtterance> corpus;
  for (int i = 0; i < n; ++i) {
    clips.push_back(pipeline::synth_utterance(spk[i % 2], derive_seed(seed, "c", i), 0.3));
    corpus.push_back({clips.back().wave, clips.back().transcript});
  }
  const auto dict = phoneme::build_dictionary(corpus);
  std::vector<TrainingPair> pairs;
  for (const auto& c : clips) {
    audio::Waveform pur = c.wave;
    for (auto& v : pur.samples) v *= 0.5;
    pairs.push_back(make_training_pair(c.wave, pur, c.transcript, dict));
  }
  return pairs;
}

RefinerTrainingConfig tiny_config(int steps, std::uint64_t seed) {
  RefinerTrainingConfig c;
  c.steps = steps;
  c.batch_size = 2;
  c.crop_frames = 16;
  c.learning_rate = 3e-3;
  c.seed = seed;
  c.arch.channels = 4;
  c.arch.embed_dim = 8;
  return c;
}

}  // namespace

TEST_CASE("train_refiner is deterministic under a fixed seed") {
  const auto pairs = scaled_pairs(6, 2);
  const auto a = train_refiner(pairs, {}, tiny_config(20, 5), 5);
  std::vector<std::vector<char>> shift{std::vector<char>(48), std::vector<char>(4004)};
  const auto b = train_refiner(pairs, {}, tiny_config(20, 5), 5);
  REQUIRE(a.loss_history.size() == 4);
  CHECK(a.loss_history == b.loss_history);
  CHECK(error_kind([] { train_refiner({}, {}, {}); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("train_refiner loss halves on a 100-pair toy corpus") {
  const auto pairs = scaled_pairs(100, 3);
  const auto r = train_refiner(pairs, {}, tiny_config(300, 1), 25);
  MESSAGE("refiner loss " << r.loss_history.front() << " -> " << r.loss_history.back());
  CHECK(r.loss_history.back() <= 0.5 * r.loss_history.front());
}

TEST_CASE("short pairs are padded or skipped by policy") {
  auto pairs = scaled_pairs(3, 4);  // 0.3 s clips: 38 frames
  auto cfg = tiny_config(2, 1);
  cfg.crop_frames = 64;
  CHECK_NOTHROW(train_refiner(pairs, {}, cfg));
  cfg.short_policy = ShortCropPolicy::kSkip;
  CHECK(error_kind([&] { train_refiner(pairs, {}, cfg); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("refiner trained on identical pairs is close to identity") {
  const auto spk = pipeline::make_speakers(2, 6);
  std::vector<pipeline::SynthClip> clips;
  std::vector<phoneme::AlignedUtterance> corpus;
  for (int i = 0; i < 24; ++i) {
    clips.push_back(pipeline::synth_utterance(spk[i % 2], derive_seed(6, "c", i), 0.3));
    corpus.push_back({clips.back().wave, clips.back().transcript});
  }
  const auto dict = phoneme::build_dictionary(corpus);
  std::vector<TrainingPair> train, held;
  for (int i = 0; i < 24; ++i) {
    (i < 20 ? train : held).push_back(make_training_pair(clips[i].wave, clips[i].wave, clips[i].transcript, dict));
  }
  const auto r = train_refiner(train, {}, tiny_config(200, 2), 50);
  for (const auto& pair : held) {
    const auto out = refine(pair.purified, pair.phoneme_rep, r.model, {}, {}, 7);
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      diff += std::norm(out.data[i] - pair.purified.data[i]);
      norm += std::norm(pair.purified.data[i]);
    }
    MESSAGE("relative distance " << std::sqrt(diff / norm));
    CHECK(std::sqrt(diff / norm) < 0.05);
  }
}

TEST_CASE("refiner checkpoint round trip and STFT mismatch") {
  ScoreNetArch arch;
  arch.channels = 2;
  arch.embed_dim = 4;
  ScoreUNet model(arch, {}, 3);
  SamplerSettings s;
  s.n_steps = 12;
  const auto dir = testutil::temp_dir("refiner_ckpt");
  save_refiner(dir / "r.ckpt", model, s, {}, "abc");
  const auto ck = load_refiner(dir / "r.ckpt", {});
  CHECK(ck.sampler.n_steps == 12);
  CHECK(std::isnan(ck.sampler.t_ref));
  CHECK(ck.dictionary_fingerprint == "abc");
  const auto a = warped_spec(3, 1);
  const auto lam = warp_representation(flat_lambda(3));
  const ScoreCondition cond{256, 3, a.data, lam};
  CHECK(ck.model.score(a.data, cond, 0.5) == model.score(a.data, cond, 0.5));

  audio::SpectrogramConfig wide;
  wide.window_size = 512;
  try {
    load_refiner(dir / "r.ckpt", wide);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCheckpointMismatch);
    CHECK(std::string(e.what()).find("510") != std::string::npos);
    CHECK(std::string(e.what()).find("512") != std::string::npos);
  }
}

TEST_CASE("preconditioning limits") {
  ScoreNetArch arch;
  arch.residual_std = 0.2;
  ScoreUNet model(arch, {}, 0);
  for (double tau : {0.03, 0.5, 1.0}) {
    const auto pc = model.preconditioning(tau);
    const double v = 0.04;
    const double total = pc.decay * pc.decay * v + pc.sigma * pc.sigma;
    // c_skip a is the linear MMSE estimate of d from a = e d + sigma z.
    CHECK(pc.c_skip == doctest::Approx(pc.decay * v / total));
    // Its error variance is c_out^2.
    CHECK(pc.c_out * pc.c_out == doctest::Approx(v - pc.c_skip * pc.decay * v));
    CHECK(pc.c_in * pc.c_in * total == doctest::Approx(1.0));
  }
}
