#include <cmath>

#include "helpers.hpp"
#include "vpure/eval/metrics.hpp"
#include "vpure/pipeline/synth.hpp"
#include "vpure/protect/attack.hpp"
#include "vpure/protect/encoder.hpp"

using namespace vpure;
using namespace vpure::protect;
using testutil::error_kind;

namespace {

struct EncoderFixture {
  std::vector<pipeline::SynthClip> train, held;
  ToySpeakerEncoder encoder;
};

// Two synthetic speakers, 12 training clips each and 10 held out.
const EncoderFixture& fixture() {
  static const EncoderFixture f = [] {
    const auto speakers = pipeline::make_speakers(2, 21);
    std::vector<pipeline::SynthClip> train, held;
    for (const auto& s : speakers) {
      for (int i = 0; i < 22; ++i) {
        auto c = pipeline::synth_utterance(s, derive_seed(21, s.id, i), 0.5);
        (i < 12 ? train : held).push_back(std::move(c));
      }
    }
    std::vector<LabeledClip> lab;
    for (const auto& c : train) lab.push_back({c.wave, c.speaker});
    EncoderTrainingConfig cfg;
    cfg.seed = 4;
    return EncoderFixture{train, held, train_toy_encoder(lab, cfg)};
  }();
  return f;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cosine basics") {
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 2}) == 0.0);
  CHECK(cosine(std::vector<double>{1, 1}, std::vector<double>{2, 2}) == doctest::Approx(1.0));
  CHECK(error_kind([] { cosine(std::vector<double>{1}, std::vector<double>{1, 2}); }) ==
        ErrorKind::kInvalidInput);
}

TEST_CASE("untrained encoder: unit norm and determinism") {
  ToySpeakerEncoder enc({}, {}, 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = testutil::white_noise(5000, s);
    const auto e = enc.embed(x);
    CHECK(e.size() == 16);
    CHECK(std::abs(norm2(e) - 1.0) <= 1e-6);
    CHECK(enc.embed(x) == e);
  }
}

TEST_CASE("encoder input gradient matches finite differences") {
  ToySpeakerEncoder enc({}, {}, 8);
  const auto x = testutil::white_noise(2000, 9, 0.4);
  std::vector<double> dir(16);
  Rng rng(1);
  std::normal_distribution<double> nd;
  for (auto& v : dir) v = nd(rng);
  const auto g = enc.embed_gradient(x, dir);
  REQUIRE(g.size() == x.size());
  auto f = [&](const audio::Waveform& w) {
    const auto e = enc.embed(w);
    double s = 0.0;
    for (int i = 0; i < 16; ++i) s += e[i] * dir[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); i += 97) {
    auto xp = x, xm = x;
    xp.samples[i] += 1e-6;
    xm.samples[i] -= 1e-6;
    const double fd = (f(xp) - f(xm)) / 2e-6;
    INFO("sample " << i);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-3).scale(1e-3 * std::abs(fd) + 1e-6));
  }
  // Edge samples exercise the reflect padding in the adjoint.
  for (std::size_t i : {std::size_t{0}, std::size_t{1}, x.size() - 1}) {
    auto xp = x, xm = x;
    xp.samples[i] += 1e-6;
    xm.samples[i] -= 1e-6;
    CHECK(g[i] == doctest::Approx((f(xp) - f(xm)) / 2e-6).epsilon(1e-3).scale(1e-5));
  }
}

TEST_CASE("train_toy_encoder rejects a single speaker") {
  std::vector<LabeledClip> one;
  for (int i = 0; i < 10; ++i) one.push_back({testutil::white_noise(4000, i), "a"});
  CHECK(error_kind([&] { train_toy_encoder(one); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("trained encoder separates two synthetic speakers") {
  const auto& f = fixture();
  std::vector<double> genuine, impostor;
  double same = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < f.held.size(); ++i) {
    const auto ei = f.encoder.embed(f.held[i].wave);
    CHECK(std::abs(norm2(ei) - 1.0) <= 1e-6);
    for (std::size_t j = i + 1; j < f.held.size(); ++j) {
      const double c = cosine(ei, f.encoder.embed(f.held[j].wave));
      (f.held[i].speaker == f.held[j].speaker ? genuine : impostor).push_back(c);
    }
  }
  for (double v : genuine) same += v / genuine.size();
  for (double v : impostor) cross += v / impostor.size();
  const auto eer = eval::eer_threshold(genuine, impostor);
  MESSAGE("same " << same << " cross " << cross << " eer " << eer.eer);
  CHECK(same - cross >= 0.3);
  CHECK(eer.eer < 0.1);
}

TEST_CASE("encoder checkpoint round trip and STFT mismatch") {
  auto enc = ToySpeakerEncoder({}, {}, 5);
  const auto dir = testutil::temp_dir("encoder");
  save_encoder(dir / "e.ckpt", enc);
  const auto back = load_encoder(dir / "e.ckpt", {});
  const auto x = testutil::white_noise(3000, 1);
  CHECK(back.embed(x) == enc.embed(x));
  audio::SpectrogramConfig other;
  other.window_size = 512;
  CHECK(error_kind([&] { load_encoder(dir / "e.ckpt", other); }) == ErrorKind::kCheckpointMismatch);
}

TEST_CASE("protection config validation and JSON") {
  ProtectionConfig c;
  CHECK_NOTHROW(c.validate());
  c.step_size = 0.01;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kInvalidInput);
  c = {};
  c.epsilon = -1.0;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kInvalidInput);
  c = {};
  c.mode = AttackMode::kTargetedToward;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kInvalidInput);
  c.target_embedding = std::vector<double>(16, 0.25);
  const auto back = ProtectionConfig::from_json(c.to_json());
  CHECK(back.mode == AttackMode::kTargetedToward);
  CHECK(*back.target_embedding == *c.target_embedding);
  CHECK(error_kind([] { ProtectionConfig::from_json({{"mode", "sideways"}}); }) == ErrorKind::kConfig);
}

TEST_CASE("project_linf holds the budget bit-exactly") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double eps : {1e-3, 0.008, 0.1, 0.3}) {
    std::vector<double> x(5000), adv(5000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = u(rng);
      adv[i] = x[i] + 3.0 * eps * u(rng);
    }
    project_linf(x, adv, eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(adv[i] - x[i]) <= eps);
      CHECK(std::abs(adv[i]) <= 1.0);
    }
  }
}

TEST_CASE("embedding attack contracts") {
  const auto& f = fixture();
  const auto& x = f.held[0].wave;
  ProtectionConfig c;
  c.n_iters = 10;
  c.epsilon = 0.0;
  c.step_size = 0.0;
  CHECK(embedding_attack(x, f.encoder, c, 1).samples == x.samples);
  c.mode = AttackMode::kTargetedToward;
  c.target_embedding = f.encoder.embed(f.held.back().wave);
  CHECK(embedding_attack(x, f.encoder, c, 1).samples == x.samples);

  c = {};
  c.n_iters = 10;
  const auto a = embedding_attack(x, f.encoder, c, 7);
  const auto b = embedding_attack(x, f.encoder, c, 7);
  CHECK(a.samples == b.samples);
  CHECK(within_budget(x, a, c.epsilon));

  c.mode = AttackMode::kTargetedToward;
  CHECK(error_kind([&] { embedding_attack(x, f.encoder, c, 1); }) == ErrorKind::kInvalidInput);
  c.target_embedding = std::vector<double>(3, 1.0);
  CHECK(error_kind([&] { embedding_attack(x, f.encoder, c, 1); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("targeted attack moves toward the target") {
  const auto& f = fixture();
  const auto& x = f.held[0].wave;
  const auto target = f.encoder.embed(f.held.back().wave);
  ProtectionConfig c;
  c.mode = AttackMode::kTargetedToward;
  c.target_embedding = target;
  c.n_iters = 30;
  const auto adv = embedding_attack(x, f.encoder, c, 2);
  CHECK(cosine(f.encoder.embed(adv), target) > cosine(f.encoder.embed(x), target));
}

TEST_CASE("untargeted attack lowers similarity by at least 0.3 over 20 clips") {
  const auto& f = fixture();
  ProtectionConfig c;  // eps 0.008, 100 iterations
  double drop = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto& x = f.held[i].wave;
    const auto adv = embedding_attack(x, f.encoder, c, derive_seed(1, "att", i));
    CHECK(within_budget(x, adv, c.epsilon));
    drop += (1.0 - cosine(f.encoder.embed(adv), f.encoder.embed(x))) / 20.0;
  }
  MESSAGE("mean cosine drop " << drop);
  CHECK(drop >= 0.3);
}

TEST_CASE("larger budget displaces the embedding at least as much") {
  const auto& f = fixture();
  double small = 0.0, large = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto& x = f.held[i].wave;
    const auto e = f.encoder.embed(x);
    ProtectionConfig c;
    c.n_iters = 30;
    c.epsilon = 0.002;
    c.step_size = 0.0005;
    small += 1.0 - cosine(f.encoder.embed(embedding_attack(x, f.encoder, c, i)), e);
    c.epsilon = 0.02;
    c.step_size = 0.002;
    large += 1.0 - cosine(f.encoder.embed(embedding_attack(x, f.encoder, c, i)), e);
  }
  CHECK(large >= small);
}

TEST_CASE("BPDA+EOT with an identity purifier reproduces the plain attack") {
  const auto& f = fixture();
  const auto& x = f.held[1].wave;
  ProtectionConfig c;
  c.n_iters = 15;
  const PurifyFn identity = [](const audio::Waveform& w, std::uint64_t) { return w; };
  const auto a = bpda_eot_protect(x, f.encoder, identity, 1, c, 5);
  const auto b = embedding_attack(x, f.encoder, c, 5);
  CHECK(a.samples == b.samples);
  CHECK(error_kind([&] { bpda_eot_protect(x, f.encoder, identity, 0, c, 5); }) ==
        ErrorKind::kInvalidInput);
}

TEST_CASE("BPDA+EOT budget and determinism with a noisy purifier") {
  const auto& f = fixture();
  const PurifyFn noisy = [](const audio::Waveform& w, std::uint64_t seed) {
    auto out = w;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 0.01);
    for (auto& v : out.samples) v += nd(rng);
    return out;
  };
  ProtectionConfig c;
  c.n_iters = 5;
  for (int i = 0; i < 4; ++i) {
    const auto& x = f.held[i].wave;
    const auto a = bpda_eot_protect(x, f.encoder, noisy, 3, c, i, 1);
    const auto b = bpda_eot_protect(x, f.encoder, noisy, 3, c, i, 3);
    CHECK(a.samples == b.samples);
    CHECK(within_budget(x, a, c.epsilon));
  }
  c.epsilon = 0.0;
  c.step_size = 0.0;
  CHECK(bpda_eot_protect(f.held[0].wave, f.encoder, noisy, 2, c, 1).samples == f.held[0].wave.samples);
}

TEST_CASE("protection record JSON") {
  ProtectionRecord r;
  r.iterations = 100;
  r.displacement = 0.4;
  r.budget_ok = true;
  const auto j = r.to_json();
  CHECK(j.at("iterations") == 100);
  CHECK(j.at("budget_ok") == true);
  CHECK(j.at("config").at("epsilon") == 0.008);
}
