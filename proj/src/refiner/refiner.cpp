#include "vpure/refiner/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "vpure/common/error.hpp"
#include "vpure/common/log.hpp"
#include "vpure/common/random.hpp"
#include "vpure/nn/optim.hpp"
#include "vpure/nn/serialize.hpp"

namespace vpure::refiner {
namespace {

double frobenius(std::span<const Complex> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

}  // namespace

void SamplerSettings::validate() const {
  if (n_steps < 1) throw invalid_input("sampler: n_steps must be >= 1");
  if (!(corrector_snr > 0.0)) throw invalid_input("sampler: corrector_snr must be positive");
  if (corrector_steps < 0) throw invalid_input("sampler: corrector_steps must be >= 0");
}

nlohmann::json SamplerSettings::to_json() const {
  nlohmann::json j = {{"n_steps", n_steps},
                      {"corrector_snr", corrector_snr},
                      {"corrector_steps", corrector_steps},
                      {"init_noise", init_noise},
                      {"final_denoise", final_denoise}};
  j["t_ref"] = std::isnan(t_ref) ? nlohmann::json(nullptr) : nlohmann::json(t_ref);
  return j;
}

SamplerSettings SamplerSettings::from_json(const nlohmann::json& j) {
  SamplerSettings s;
  s.n_steps = j.value("n_steps", s.n_steps);
  s.corrector_snr = j.value("corrector_snr", s.corrector_snr);
  s.corrector_steps = j.value("corrector_steps", s.corrector_steps);
  s.init_noise = j.value("init_noise", s.init_noise);
  s.final_denoise = j.value("final_denoise", s.final_denoise);
  if (j.contains("t_ref") && !j.at("t_ref").is_null()) s.t_ref = j.at("t_ref");
  return s;
}

std::vector<double> warp_representation(const phoneme::PhonemeRepresentation& lam) {
  std::vector<double> out(lam.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(std::max(lam.data[i], 0.0));
  return out;
}

TrainingPair make_training_pair(const audio::Waveform& clean, const audio::Waveform& purified,
                                const phoneme::AlignedTranscript& transcript,
                                const phoneme::PhonemeDictionary& dict) {
  if (clean.size() != purified.size()) {
    throw invalid_input("make_training_pair: clean and purified lengths differ");
  }
  const auto [pur_n, scale] = audio::normalize_by_peak(purified, purified);
  const auto clean_n = audio::normalize_by_peak(clean, purified).first;
  TrainingPair pair;
  pair.clean = audio::warp_magnitude(audio::stft(clean_n, dict.config));
  pair.purified = audio::warp_magnitude(audio::stft(pur_n, dict.config));
  pair.phoneme_rep = phoneme::assemble_representation(transcript, pair.clean.n_frames, dict);
  return pair;
}

double dsm_training_loss(ScoreUNet& model, const DsmSample& sample, LossWeighting weighting,
                         bool backprop) {
  const std::size_t plane = static_cast<std::size_t>(sample.bins) * sample.frames;
  if (sample.m0.size() != plane || sample.y.size() != plane || sample.lambda.size() != plane ||
      sample.z.size() != plane || (!sample.mask.empty() && sample.mask.size() != plane)) {
    throw invalid_input("dsm_training_loss: shape mismatch");
  }
  const auto& params = model.sde();
  const auto m_tau = forward_perturb(sample.m0, sample.y, sample.tau, sample.z, params);
  const auto pc = model.preconditioning(sample.tau);
  // DSM integrand per element is (e c_out / sigma^2)^2 |F - target|^2.
  const double dsm_scale = std::pow(pc.decay * pc.c_out / (pc.sigma * pc.sigma), 2);
  double weight = 1.0;
  switch (weighting) {
    case LossWeighting::kNone: weight = dsm_scale; break;
    case LossWeighting::kSigmaSquared: weight = pc.sigma * pc.sigma * dsm_scale; break;
    case LossWeighting::kPreconditioned: weight = 1.0; break;
  }
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < plane; ++i) n_valid += sample.mask.empty() || sample.mask[i];
  if (n_valid == 0) throw invalid_input("dsm_training_loss: every element is masked");

  const ScoreCondition cond{sample.bins, sample.frames, sample.y, sample.lambda};
  ScoreUNet::Cache cache;
  const nn::Tensor f = model.forward(model.pack_input(m_tau, cond, sample.tau), sample.tau, cache);
  nn::Tensor grad(2, sample.bins, sample.frames);
  double loss = 0.0;
  const double coef = 2.0 * weight / static_cast<double>(n_valid);
  for (std::size_t i = 0; i < plane; ++i) {
    if (!sample.mask.empty() && !sample.mask[i]) continue;
    const Complex a = m_tau[i] - sample.y[i];
    const Complex target = (sample.m0[i] - sample.y[i] - pc.c_skip * a) / pc.c_out;
    const Complex r = Complex(f.v[i], f.v[plane + i]) - target;
    loss += std::norm(r);
    grad.v[i] = static_cast<float>(coef * r.real());
    grad.v[plane + i] = static_cast<float>(coef * r.imag());
  }
  if (backprop) model.backward(cache, grad);
  return weight * loss / static_cast<double>(n_valid);
}

RefinerTrainingResult train_refiner(const std::vector<TrainingPair>& pairs,
                                    const OUSDEParams& params,
                                    const RefinerTrainingConfig& config, int log_every) {
  if (pairs.empty()) throw invalid_input("train_refiner: no training pairs");
  params.validate();
  if (config.steps < 1 || config.batch_size < 1 || config.crop_frames < 1) {
    throw invalid_input("train_refiner: invalid training config");
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.clean.n_frames != p.purified.n_frames || p.clean.n_bins != p.purified.n_bins ||
        p.phoneme_rep.n_frames != p.clean.n_frames || p.phoneme_rep.n_bins != p.clean.n_bins) {
      throw invalid_input("train_refiner: pair " + std::to_string(i) + " has mismatched shapes");
    }
    if (p.clean.n_frames >= config.crop_frames ||
        config.short_policy == ShortCropPolicy::kPadWithMask) {
      usable.push_back(i);
    }
  }
  if (usable.empty()) throw invalid_input("train_refiner: every pair is shorter than the crop");

  ScoreNetArch arch = config.arch;
  if (config.fit_residual_std) {
    double ss = 0.0;
    std::size_t count = 0;
    for (const auto i : usable) {
      const auto& p = pairs[i];
      for (std::size_t k = 0; k < p.clean.size(); ++k) ss += std::norm(p.clean.data[k] - p.purified.data[k]);
      count += p.clean.size();
    }
    // Floor keeps the preconditioning finite when clean == purified.
    const double rms = params.state_scale * std::sqrt(ss / static_cast<double>(count));
    arch.residual_std = std::max(rms, 1e-4);
  }
  RefinerTrainingResult result{ScoreUNet(arch, params, derive_seed(config.seed, "refiner.init")), {}};
  auto& model = result.model;
  nn::Adam adam(model.parameters(), {.lr = config.learning_rate});
  Rng rng(derive_seed(config.seed, "refiner.train"));
  std::uniform_int_distribution<std::size_t> pick_pair(0, usable.size() - 1);
  std::uniform_real_distribution<double> pick_tau(params.tau_eps, params.t_max);

  const double scale = params.state_scale;
  const int bins = pairs.front().clean.n_bins;
  const int crop = config.crop_frames;
  const std::size_t plane = static_cast<std::size_t>(bins) * crop;
  std::vector<Complex> m0(plane), y(plane);
  std::vector<double> lam(plane);
  std::vector<unsigned char> valid(plane);
  double block_loss = 0.0;
  int block_count = 0;

  for (int step = 0; step < config.steps; ++step) {
    adam.zero_grad();
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& pair = pairs[usable[pick_pair(rng)]];
      const int frames = pair.clean.n_frames;
      int offset = 0;
      if (frames > crop) {
        offset = std::uniform_int_distribution<int>(0, frames - crop)(rng);
      }
      const auto lam_w = warp_representation(pair.phoneme_rep);
      for (int k = 0; k < bins; ++k) {
        for (int f = 0; f < crop; ++f) {
          const std::size_t dst = static_cast<std::size_t>(k) * crop + f;
          const int src_f = offset + f;
          if (src_f < frames) {
            m0[dst] = scale * pair.clean.at(k, src_f);
            y[dst] = scale * pair.purified.at(k, src_f);
            lam[dst] = scale * lam_w[static_cast<std::size_t>(k) * frames + src_f];
            valid[dst] = 1;
          } else {
            m0[dst] = y[dst] = Complex{};
            lam[dst] = 0.0;
            valid[dst] = 0;
          }
        }
      }
      const double tau = pick_tau(rng);
      const auto z = complex_normal_vector(rng, plane);
      const DsmSample sample{bins, crop, m0, y, lam, z, valid, tau};
      batch_loss += dsm_training_loss(model, sample, config.weighting, true);
    }
    adam.step(1.0 / config.batch_size);
    block_loss += batch_loss / config.batch_size;
    if (++block_count == log_every || step + 1 == config.steps) {
      result.loss_history.push_back(block_loss / block_count);
      logger()->debug("refiner step {} loss {:.6f}", step + 1, block_loss / block_count);
      block_loss = 0.0;
      block_count = 0;
    }
  }
  return result;
}

audio::ComplexSpectrogram refine(const audio::ComplexSpectrogram& m_pur,
                                 const phoneme::PhonemeRepresentation& lam,
                                 const ScoreEstimator& model, const OUSDEParams& params,
                                 const SamplerSettings& sampler, std::uint64_t rng_seed) {
  params.validate();
  sampler.validate();
  if (!m_pur.warped) throw Error(ErrorKind::kState, "refine: m_pur must be magnitude-warped");
  if (lam.n_bins != m_pur.n_bins || lam.n_frames != m_pur.n_frames) {
    throw invalid_input("refine: phoneme representation shape does not match m_pur");
  }
  const double scale = params.state_scale;
  auto lam_w = warp_representation(lam);
  for (auto& v : lam_w) v *= scale;
  std::vector<Complex> y = m_pur.data;
  for (auto& v : y) v *= scale;
  const ScoreCondition cond{m_pur.n_bins, m_pur.n_frames, y, lam_w};
  const double t_ref = std::isnan(sampler.t_ref) ? params.t_max : sampler.t_ref;
  if (!(t_ref >= params.tau_eps)) throw invalid_input("refine: t_ref below tau_eps");

  Rng rng(rng_seed);
  const std::size_t n = m_pur.size();
  std::vector<Complex> m = y;
  if (sampler.init_noise) {
    const double sigma_ref = ou_sigma(t_ref, params);
    const auto z = complex_normal_vector(rng, n);
    for (std::size_t i = 0; i < n; ++i) m[i] += sigma_ref * z[i];
  }
  const double dt = (t_ref - params.tau_eps) / sampler.n_steps;
  for (int k = 0; k < sampler.n_steps; ++k) {
    const double tau = t_ref - k * dt;
    // Predictor: reverse-time Euler-Maruyama.
    const auto s = model.score(m, cond, tau);
    const double g = params.diffusion(tau);
    const auto z = complex_normal_vector(rng, n);
    const double noise_scale = g * std::sqrt(dt);
    for (std::size_t i = 0; i < n; ++i) {
      const Complex drift = params.gamma * (y[i] - m[i]) - g * g * s[i];
      m[i] += -drift * dt + noise_scale * z[i];
    }
    // Corrector: annealed Langevin at the new time.
    const double tau_next = tau - dt;
    for (int c = 0; c < sampler.corrector_steps; ++c) {
      const auto sc = model.score(m, cond, tau_next);
      const auto zc = complex_normal_vector(rng, n);
      const double score_norm = frobenius(sc);
      if (!(score_norm > 0.0)) continue;
      const double ratio = sampler.corrector_snr * frobenius(zc) / score_norm;
      const double step = 2.0 * ratio * ratio;
      const double kick = std::sqrt(2.0 * step);
      for (std::size_t i = 0; i < n; ++i) m[i] += step * sc[i] + kick * zc[i];
    }
  }
  if (sampler.final_denoise) {
    const double tau_end = t_ref - sampler.n_steps * dt;
    const double var = std::pow(ou_sigma(tau_end, params), 2);
    const auto s = model.score(m, cond, tau_end);
    for (std::size_t i = 0; i < n; ++i) m[i] += var * s[i];
  }
  audio::ComplexSpectrogram out = m_pur;
  for (std::size_t i = 0; i < n; ++i) out.data[i] = m[i] / scale;
  return out;
}

audio::Waveform refine_waveform(const audio::Waveform& x_pur, const RefineRequest& request,
                                const ScoreEstimator& model, const OUSDEParams& params,
                                const SamplerSettings& sampler, std::uint64_t rng_seed,
                                const audio::SpectrogramConfig& config) {
  const auto [normalized, scale] = audio::normalize_by_peak(x_pur, x_pur);
  const auto spec = audio::warp_magnitude(audio::stft(normalized, config));
  phoneme::PhonemeRepresentation lam;
  switch (request.guidance) {
    case PhonemeGuidance::kAligned:
      if (!request.transcript || !request.dictionary) {
        throw invalid_input("refine_waveform: aligned guidance needs a transcript and dictionary");
      }
      lam = phoneme::assemble_representation(*request.transcript, spec.n_frames,
                                             *request.dictionary);
      break;
    case PhonemeGuidance::kGlobalAverage:
      if (!request.dictionary) throw invalid_input("refine_waveform: global guidance needs a dictionary");
      lam = phoneme::global_representation(spec.n_frames, *request.dictionary);
      break;
    case PhonemeGuidance::kZero:
      lam = {spec.n_bins, spec.n_frames,
             std::vector<double>(static_cast<std::size_t>(spec.n_bins) * spec.n_frames, 0.0)};
      break;
  }
  if (request.dictionary && !(request.dictionary->config == config)) {
    throw Error(ErrorKind::kCheckpointMismatch, "refine_waveform: dictionary STFT config differs");
  }
  const auto refined = refine(spec, lam, model, params, sampler, rng_seed);
  auto out = audio::istft(audio::unwarp_magnitude(refined), x_pur.size());
  for (auto& v : out.samples) v *= scale;
  audio::clip_unit(out.samples);
  return out;
}

void save_refiner(const std::filesystem::path& path, ScoreUNet& model,
                  const SamplerSettings& sampler, const audio::SpectrogramConfig& stft,
                  const std::string& dictionary_fingerprint) {
  const nn::json doc = {
      {"format", "vpure.refiner"},
      {"version", 1},
      {"arch", model.arch().to_json()},
      {"sde", model.sde().to_json()},
      {"sampler", sampler.to_json()},
      {"stft", {{"window_size", stft.window_size}, {"hop_length", stft.hop_length}}},
      {"stft_fingerprint", stft.fingerprint()},
      {"dictionary_fingerprint", dictionary_fingerprint},
      {"params", nn::params_to_json(model.parameters())},
  };
  nn::write_container(path, doc);
}

RefinerCheckpoint load_refiner(const std::filesystem::path& path,
                               const audio::SpectrogramConfig& expected_stft) {
  const auto doc = nn::read_container(path, "vpure.refiner", 1);
  if (doc.at("stft_fingerprint").get<std::string>() != expected_stft.fingerprint()) {
    throw Error(ErrorKind::kCheckpointMismatch,
                path.string() + ": trained with STFT window " +
                    std::to_string(doc.at("stft").at("window_size").get<int>()) + "/hop " +
                    std::to_string(doc.at("stft").at("hop_length").get<int>()) +
                    ", configured window " + std::to_string(expected_stft.window_size) +
                    "/hop " + std::to_string(expected_stft.hop_length));
  }
  const auto params = OUSDEParams::from_json(doc.at("sde"));
  RefinerCheckpoint ck{ScoreUNet(ScoreNetArch::from_json(doc.at("arch")), params), params,
                       SamplerSettings::from_json(doc.at("sampler")), expected_stft,
                       doc.at("dictionary_fingerprint").get<std::string>()};
  nn::params_from_json(doc.at("params"), ck.model.parameters());
  return ck;
}

}  // namespace vpure::refiner
