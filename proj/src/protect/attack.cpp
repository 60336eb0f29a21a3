#include "vpure/protect/attack.hpp"

#include <algorithm>
#include <cmath>

#include "vpure/common/error.hpp"
#include "vpure/common/parallel.hpp"
#include "vpure/common/random.hpp"

namespace vpure::protect {
namespace {

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

struct AttackSetup {
  std::vector<double> direction;
  double ascent = -1.0;  // +1 moves toward the direction, -1 away from it
};

AttackSetup setup(const audio::Waveform& x, const SpeakerEncoder& encoder,
                  const ProtectionConfig& config) {
  AttackSetup s;
  if (config.mode == AttackMode::kUntargetedAway) {
    s.direction = encoder.embed(x);
    return s;
  }
  const auto& t = *config.target_embedding;
  if (static_cast<int>(t.size()) != encoder.dim()) {
    throw invalid_input("protection: target embedding has dimension " + std::to_string(t.size()) +
                        ", encoder has " + std::to_string(encoder.dim()));
  }
  double norm = 0.0;
  for (double v : t) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw invalid_input("protection: zero target embedding");
  s.direction.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) s.direction[i] = t[i] / norm;
  s.ascent = 1.0;
  return s;
}

std::vector<double> start_point(const audio::Waveform& x, const ProtectionConfig& config,
                                std::uint64_t seed) {
  auto adv = x.samples;
  if (config.random_start) {
    Rng rng(derive_seed(seed, "protect.start"));
    std::uniform_real_distribution<double> u(-config.epsilon, config.epsilon);
    for (auto& v : adv) v += u(rng);
  }
  project_linf(x.samples, adv, config.epsilon);
  return adv;
}

void signed_step(std::vector<double>& adv, const std::vector<double>& grad, double step) {
  for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += step * sgn(grad[i]);
}

}  // namespace

void ProtectionConfig::validate() const {
  if (!(epsilon >= 0.0)) throw invalid_input("protection: epsilon must be >= 0");
  if (n_iters < 0) throw invalid_input("protection: n_iters must be >= 0");
  if (!(step_size >= 0.0)) throw invalid_input("protection: step_size must be >= 0");
  if (epsilon > 0.0 && step_size > epsilon) {
    throw invalid_input("protection: step_size must not exceed epsilon");
  }
  if (mode == AttackMode::kTargetedToward && !target_embedding) {
    throw invalid_input("protection: targeted mode requires a target embedding");
  }
}

nlohmann::json ProtectionConfig::to_json() const {
  nlohmann::json j = {{"epsilon", epsilon},
                      {"n_iters", n_iters},
                      {"step_size", step_size},
                      {"mode", mode == AttackMode::kUntargetedAway ? "untargeted" : "targeted"},
                      {"random_start", random_start}};
  if (target_embedding) j["target_embedding"] = *target_embedding;
  return j;
}

ProtectionConfig ProtectionConfig::from_json(const nlohmann::json& j) {
  ProtectionConfig c;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.n_iters = j.value("n_iters", c.n_iters);
  c.step_size = j.value("step_size", c.step_size);
  c.random_start = j.value("random_start", c.random_start);
  const auto mode = j.value("mode", std::string("untargeted"));
  if (mode == "untargeted") {
    c.mode = AttackMode::kUntargetedAway;
  } else if (mode == "targeted") {
    c.mode = AttackMode::kTargetedToward;
  } else {
    throw Error(ErrorKind::kConfig, "protection: unknown mode '" + mode + "'");
  }
  if (j.contains("target_embedding")) {
    c.target_embedding = j.at("target_embedding").get<std::vector<double>>();
  }
  return c;
}

void project_linf(const std::vector<double>& x, std::vector<double>& x_adv, double eps) {
  if (x.size() != x_adv.size()) throw invalid_input("project_linf: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = std::clamp(x_adv[i], -1.0, 1.0);
    v = std::clamp(v, x[i] - eps, x[i] + eps);
    // x +/- eps is rounded; walk back until the difference itself fits.
    while (std::abs(v - x[i]) > eps) v = std::nextafter(v, x[i]);
    x_adv[i] = v;
  }
}

bool within_budget(const audio::Waveform& x, const audio::Waveform& x_adv, double eps) {
  if (x.size() != x_adv.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x_adv.samples[i] - x.samples[i]) > eps) return false;
  }
  return true;
}

audio::Waveform quantize_pcm16_within_budget(const audio::Waveform& x,
                                             const audio::Waveform& x_adv, double eps) {
  if (x.size() != x_adv.size()) throw invalid_input("quantize_pcm16_within_budget: length mismatch");
  audio::Waveform out = x_adv;
  for (std::size_t i = 0; i < x.size(); ++i) {
    long q = std::clamp(std::lround(x_adv.samples[i] * 32768.0), -32768L, 32767L);
    const double xi = x.samples[i];
    if (std::abs(static_cast<double>(q) / 32768.0 - xi) > eps) q += q / 32768.0 > xi ? -1 : 1;
    out.samples[i] = static_cast<double>(q) / 32768.0;
    if (std::abs(out.samples[i] - xi) > eps) {
      throw Error(ErrorKind::kState, "quantize_pcm16_within_budget: clean signal is not 16-bit PCM");
    }
  }
  return out;
}

audio::Waveform embedding_attack(const audio::Waveform& x, const SpeakerEncoder& encoder,
                                 const ProtectionConfig& config, std::uint64_t seed) {
  config.validate();
  if (x.empty()) throw invalid_input("embedding_attack: empty waveform");
  if (config.epsilon == 0.0) return x;
  const auto s = setup(x, encoder, config);
  audio::Waveform adv(start_point(x, config, seed), x.sample_rate);
  for (int it = 0; it < config.n_iters; ++it) {
    const auto g = encoder.embed_gradient(adv, s.direction);
    signed_step(adv.samples, g, s.ascent * config.step_size);
    project_linf(x.samples, adv.samples, config.epsilon);
  }
  return adv;
}

audio::Waveform bpda_eot_protect(const audio::Waveform& x, const SpeakerEncoder& encoder,
                                 const PurifyFn& purify_fn, int eot_size,
                                 const ProtectionConfig& config, std::uint64_t seed,
                                 std::size_t workers) {
  if (eot_size <= 0) throw invalid_input("bpda_eot_protect: eot_size must be positive");
  config.validate();
  if (x.empty()) throw invalid_input("bpda_eot_protect: empty waveform");
  if (config.epsilon == 0.0) return x;
  const auto s = setup(x, encoder, config);
  audio::Waveform adv(start_point(x, config, seed), x.sample_rate);
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(eot_size));
  for (int it = 0; it < config.n_iters; ++it) {
    parallel_for(grads.size(), workers, [&](std::size_t j) {
      const auto draw = derive_seed(seed, "protect.eot",
                                    static_cast<std::uint64_t>(it) * eot_size + j);
      const auto purified = purify_fn(adv, draw);
      if (purified.size() != adv.size()) {
        throw invalid_input("bpda_eot_protect: purification changed the length");
      }
      // BPDA: the purifier's Jacobian is taken as identity.
      grads[j] = encoder.embed_gradient(purified, s.direction);
    });
    std::vector<double> g(adv.size(), 0.0);
    for (const auto& gj : grads)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gj[i];
    for (auto& v : g) v /= eot_size;
    signed_step(adv.samples, g, s.ascent * config.step_size);
    project_linf(x.samples, adv.samples, config.epsilon);
  }
  return adv;
}

nlohmann::json ProtectionRecord::to_json() const {
  return {{"config", config.to_json()}, {"seed", seed},         {"iterations", iterations},
          {"eot_size", eot_size},       {"displacement", displacement}, {"budget_ok", budget_ok}};
}

}  // namespace vpure::protect
