#include "vpure/pipeline/toy_experiment.hpp"

#include <fmt/format.h>

#include <chrono>
#include <optional>

#include "vpure/common/error.hpp"
#include "vpure/common/log.hpp"
#include "vpure/common/parallel.hpp"
#include "vpure/common/random.hpp"
#include "vpure/pipeline/pairs.hpp"
#include "vpure/pipeline/synth.hpp"
#include "vpure/protect/attack.hpp"

namespace vpure::pipeline {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json snr_levels_json(const std::vector<std::optional<double>>& levels) {
  auto j = nlohmann::json::array();
  for (const auto& l : levels) j.push_back(l ? nlohmann::json(*l) : nlohmann::json(nullptr));
  return j;
}

}  // namespace

diffusion::PurifierTrainingConfig ToyExperimentConfig::default_purifier_training() {
  diffusion::PurifierTrainingConfig c;
  c.epochs = 20;
  c.t_sample_max = 20;
  return c;
}

refiner::RefinerTrainingConfig ToyExperimentConfig::default_refiner_training() {
  refiner::RefinerTrainingConfig c;
  c.crop_frames = 64;
  c.steps = 1600;
  return c;
}

PairBuildConfig ToyExperimentConfig::default_pairs() {
  PairBuildConfig c;
  c.snr_levels = {std::nullopt};
  return c;
}

nlohmann::json ToyExperimentConfig::to_json() const {
  return {{"speakers", speakers},
          {"train_clips_per_speaker", train_clips_per_speaker},
          {"test_clips_per_speaker", test_clips_per_speaker},
          {"seconds", seconds},
          {"noise_clips", noise_clips},
          {"seed", seed},
          {"schedule", {{"t_max", schedule.t_max}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
          {"t_pur", purifier.t_pur},
          {"purifier_training", {{"epochs", purifier_training.epochs}, {"crop_len", purifier_training.crop_len},
                                 {"t_sample_max", purifier_training.t_sample_max}, {"arch", purifier_training.arch.to_json()}}},
          {"refiner_training", {{"steps", refiner_training.steps}, {"crop_frames", refiner_training.crop_frames},
                                {"arch", refiner_training.arch.to_json()}}},
          {"encoder_training", {{"steps", encoder_training.steps}, {"batch_size", encoder_training.batch_size},
                                {"learning_rate", encoder_training.learning_rate}, {"arch", encoder_training.arch.to_json()}}},
          {"pair_t_pur", pairs.t_pur},
          {"pair_snr_levels", snr_levels_json(pairs.snr_levels)},
          {"sde", sde.to_json()},
          {"sampler", sampler.to_json()},
          {"protection", protection.to_json()},
          {"threshold", threshold ? nlohmann::json(*threshold) : nlohmann::json(nullptr)}};
}

bool ToyExperimentResult::ordering_holds() const {
  const auto& full = table.row("full");
  const auto& pur = table.row("w/o refinement");
  return table.clean.sva() >= full.sva() && full.sva() > pur.sva() &&
         pur.sva() > table.protected_input.sva() && full.mean_similarity() > pur.mean_similarity();
}

nlohmann::json ToyExperimentResult::to_json() const {
  return {{"eer", eer}, {"eer_threshold", eer_threshold}, {"threshold", threshold}, {"table", table.to_json()},
          {"timings", timings}, {"ordering_holds", ordering_holds()}};
}

ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& cfg) {
  if (cfg.speakers < 2) throw invalid_input("toy experiment: need at least two speakers");
  if (cfg.train_clips_per_speaker < 1 || cfg.test_clips_per_speaker < 1) {
    throw invalid_input("toy experiment: clip counts must be positive");
  }
  auto log = logger();
  ToyExperimentResult res;
  const std::uint64_t seed = cfg.seed;
  auto t0 = Clock::now();

  // Corpus: per speaker, training clips, test clips and one enrollment clip.
  const auto speakers = make_speakers(cfg.speakers, derive_seed(seed, "toy.speakers"));
  std::vector<SynthClip> train, test;
  std::map<std::string, audio::Waveform> enrollment;
  for (const auto& s : speakers) {
    const int total = cfg.train_clips_per_speaker + cfg.test_clips_per_speaker + 1;
    for (int i = 0; i < total; ++i) {
      auto c = synth_utterance(s, derive_seed(seed, "toy.clip." + s.id, i), cfg.seconds,
                               fmt::format("{}_{}", s.id, i));
      if (i < cfg.train_clips_per_speaker) {
        train.push_back(std::move(c));
      } else if (i + 1 < total) {
        test.push_back(std::move(c));
      } else {
        enrollment[s.id] = c.wave;
      }
    }
  }
  std::vector<audio::Waveform> noise;
  for (int i = 0; i < cfg.noise_clips; ++i) {
    noise.push_back(synth_noise(static_cast<std::size_t>(2.0 * cfg.seconds * audio::kSampleRate),
                                derive_seed(seed, "toy.noise", i)));
  }

  // Cache keys cover only the settings each model's training depends on, so
  // inference-side changes reuse trained models.
  const auto full = cfg.to_json();
  nlohmann::json corpus_key = {{"seed", seed}};
  for (const char* k : {"speakers", "train_clips_per_speaker", "test_clips_per_speaker", "seconds"}) {
    corpus_key[k] = full.at(k);
  }
  const nlohmann::json encoder_key = {corpus_key, full.at("encoder_training")};
  const nlohmann::json purifier_key = {corpus_key, full.at("schedule"), full.at("purifier_training")};
  const nlohmann::json refiner_key = {purifier_key, full.at("noise_clips"), full.at("refiner_training"),
                                      full.at("sde"), full.at("pair_t_pur"),
                                      full.at("pair_snr_levels")};
  auto cached = [&](const std::string& name, const nlohmann::json& key) {
    return cfg.cache_dir.empty() ? fs::path()
                                 : cfg.cache_dir / fmt::format("{}_{}.ckpt", name, derive_seed(0, key.dump()));
  };

  // Speaker encoder.
  std::vector<protect::LabeledClip> labeled;
  for (const auto& c : train) labeled.push_back({c.wave, c.speaker});
  auto enc_cfg = cfg.encoder_training;
  enc_cfg.seed = derive_seed(seed, "toy.encoder");
  std::optional<protect::ToySpeakerEncoder> encoder;
  if (const auto p = cached("encoder", encoder_key); !p.empty() && fs::exists(p)) {
    encoder.emplace(protect::load_encoder(p, {}));
  } else {
    encoder.emplace(protect::train_toy_encoder(labeled, enc_cfg));
    if (!p.empty()) protect::save_encoder(p, *encoder);
  }
  res.timings["encoder"] = since(t0);

  // Threshold at the clean EER of the held-out clips.
  {
    std::vector<double> genuine, impostor;
    for (const auto& [spk, wave] : enrollment) {
      const auto e = encoder->embed(wave);
      for (const auto& c : test) {
        (c.speaker == spk ? genuine : impostor).push_back(protect::cosine(encoder->embed(c.wave), e));
      }
    }
    const auto eer = eval::eer_threshold(genuine, impostor);
    res.eer = eer.eer;
    res.eer_threshold = eer.threshold;
    res.threshold = cfg.threshold.value_or(eer.threshold);
  }

  // Purifier.
  t0 = Clock::now();
  const auto schedule = cfg.schedule.build();
  std::optional<diffusion::WaveDenoiser> purifier;
  if (const auto p = cached("purifier", purifier_key); !p.empty() && fs::exists(p)) {
    purifier.emplace(diffusion::load_purifier(p).model);
  } else {
    std::vector<audio::Waveform> waves;
    for (const auto& c : train) waves.push_back(c.wave);
    auto pt = cfg.purifier_training;
    pt.seed = derive_seed(seed, "toy.purifier");
    auto trained = diffusion::train_purifier(waves, schedule, pt);
    if (!p.empty()) diffusion::save_purifier(p, trained.model, schedule, cfg.purifier);
    purifier.emplace(std::move(trained.model));
  }
  res.timings["purifier"] = since(t0);

  // Dictionary, training pairs and refiner.
  t0 = Clock::now();
  std::vector<phoneme::AlignedUtterance> aligned;
  for (const auto& c : train) aligned.push_back({c.wave, c.transcript});
  const auto dict = phoneme::build_dictionary(aligned, {}, cfg.workers);
  std::optional<refiner::ScoreUNet> score_model;
  if (const auto p = cached("refiner", refiner_key); !p.empty() && fs::exists(p)) {
    score_model.emplace(refiner::load_refiner(p, {}).model);
  } else {
    const auto pairs = build_training_pairs(aligned, noise, {&*purifier, &schedule}, dict,
                                            derive_seed(seed, "toy.pairs"), cfg.pairs, nullptr, cfg.workers);
    auto rt = cfg.refiner_training;
    rt.seed = derive_seed(seed, "toy.refiner");
    auto trained = refiner::train_refiner(pairs, cfg.sde, rt);
    if (!p.empty()) refiner::save_refiner(p, trained.model, cfg.sampler, {}, dict.fingerprint());
    score_model.emplace(std::move(trained.model));
  }
  res.timings["refiner"] = since(t0);

  // Protection of the test clips.
  t0 = Clock::now();
  std::vector<EvalClip> clips;
  std::vector<audio::Waveform> protected_clips(test.size());
  std::vector<const phoneme::AlignedTranscript*> transcripts;
  for (const auto& c : test) {
    clips.push_back({c.id, c.speaker, c.wave});
    transcripts.push_back(&c.transcript);
  }
  parallel_for(test.size(), cfg.workers, [&](std::size_t i) {
    protected_clips[i] = protect::embedding_attack(test[i].wave, *encoder, cfg.protection,
                                                   clip_seed(seed, "toy.protect", test[i].id));
  });
  res.timings["protect"] = since(t0);

  t0 = Clock::now();
  StageModels models{&*purifier, &schedule, cfg.purifier, &*score_model, cfg.sde, cfg.sampler, &dict, {}};
  EvalContext ctx{&*encoder, res.threshold, enrollment, cfg.workers};
  res.table = run_ablation(clips, protected_clips, transcripts, models, ctx,
                           derive_seed(seed, "toy.purify"), derive_seed(seed, "toy.refine")).table;
  res.timings["ablation"] = since(t0);
  log->info("toy experiment seed {}: eer {:.3f}, ordering {}", seed, res.eer, res.ordering_holds());
  return res;
}

}  // namespace vpure::pipeline
