#include <fmt/format.h>

#include <cmath>
#include <optional>

#include "common.hpp"
#include "vpure/common/error.hpp"
#include "vpure/common/random.hpp"
#include "vpure/pipeline/pairs.hpp"
#include "vpure/pipeline/synth.hpp"
#include "vpure/pipeline/toy_experiment.hpp"

namespace vpure::cli {
namespace {

std::vector<std::optional<double>> parse_snr_levels(const std::vector<std::string>& items) {
  std::vector<std::optional<double>> out;
  for (const auto& item : items) {
    if (item == "none") {
      out.emplace_back(std::nullopt);
      continue;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(v)) throw std::invalid_argument(item);
      out.emplace_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "--snr-levels: '" + item + "' is neither a number nor 'none'");
    }
  }
  return out;
}

}  // namespace

void add_data_commands(CLI::App& app, Action& action) {
  {
    struct Opts {
      std::string out;
      int speakers = 2, clips = 20, test_clips = 5, noise_clips = 2;
      double seconds = 1.0;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("synth-corpus", "Write a synthetic multi-speaker corpus with alignments");
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->add_option("--speakers", o->speakers, "Number of speakers")->check(CLI::Range(1, 1000));
    sub->add_option("--clips", o->clips, "Training clips per speaker")->check(CLI::Range(1, 100000));
    sub->add_option("--test-clips", o->test_clips, "Test clips per speaker")->check(CLI::Range(0, 100000));
    sub->add_option("--noise-clips", o->noise_clips, "Noise clips")->check(CLI::Range(0, 100000));
    sub->add_option("--seconds", o->seconds, "Clip length in seconds");
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "synth");
        const fs::path dir = ctx.output();
        const std::uint64_t seed = ctx.config.seed("synth");
        const auto speakers = pipeline::make_speakers(o->speakers, seed);
        nlohmann::json listing = nlohmann::json::array();
        for (const auto& s : speakers) {
          const int total = o->clips + o->test_clips + 1;
          for (int i = 0; i < total; ++i) {
            const std::string id = fmt::format("{}_{:03d}", s.id, i);
            auto c = pipeline::synth_utterance(s, derive_seed(seed, "synth.clip." + s.id, i), o->seconds, id);
            const std::string split = i < o->clips ? "train" : (i + 1 < total ? "test" : "enroll");
            const fs::path wav = split == "enroll" ? dir / "enroll" / (s.id + ".wav") : dir / split / (id + ".wav");
            ctx.write_wav_output(wav, c.wave);
            if (split != "enroll") ctx.write_output(dir / "align" / (id + ".json"), phoneme::to_json_text(c.transcript));
            listing.push_back({{"id", id}, {"speaker", s.id}, {"split", split}});
          }
        }
        for (int k = 0; k < o->noise_clips; ++k) {
          const auto n = static_cast<std::size_t>(2.0 * o->seconds * audio::kSampleRate);
          auto w = pipeline::synth_noise(n, derive_seed(seed, "synth.noise", k));
          audio::clip_unit(w.samples);
          ctx.write_wav_output(dir / "noise" / fmt::format("noise_{:03d}.wav", k), w);
        }
        ctx.write_output(dir / "corpus.json", listing.dump(2) + "\n");
        *ctx.out << fmt::format("wrote {} clips to {}\n", listing.size(), dir.string());
      };
    });
  }
  {
    struct Opts {
      std::string corpus, alignments, out;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("build-dict", "Build the phoneme dictionary from aligned clips");
    sub->add_option("corpus", o->corpus, "WAV file or directory")->required();
    sub->add_option("alignments", o->alignments, "Directory of <id>.json / <id>.TextGrid")->required();
    sub->add_option("-o,--out", o->out, "Dictionary file")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, false);
        StageTimer timer(ctx, "build-dict");
        const auto files = list_wavs(o->corpus);
        const auto waves = read_clips(ctx, files);
        std::vector<phoneme::AlignedUtterance> corpus;
        for (std::size_t i = 0; i < files.size(); ++i) {
          corpus.push_back({waves[i], load_alignment(ctx, o->alignments, files[i].id)});
        }
        const auto dict = phoneme::build_dictionary(corpus, ctx.config.stft, ctx.workers());
        phoneme::save_dictionary(o->out, dict);
        ctx.add_output(o->out);
        ctx.manifest.fingerprints["dictionary"] = dict.fingerprint();
        *ctx.out << fmt::format("dictionary with {} phonemes from {} clips\n", dict.entries.size(), files.size());
      };
    });
  }
}

void add_training_commands(CLI::App& app, Action& action) {
  {
    struct Opts {
      std::string corpus, out;
      diffusion::PurifierTrainingConfig train;
    };
    auto o = std::make_shared<Opts>();
    o->train.t_sample_max = 20;
    auto* sub = app.add_subcommand("train-purifier", "Train the waveform denoiser");
    sub->add_option("corpus", o->corpus, "WAV file or directory")->required();
    sub->add_option("-o,--out", o->out, "Checkpoint file")->required();
    sub->add_option("--epochs", o->train.epochs)->check(CLI::PositiveNumber);
    sub->add_option("--batch", o->train.batch_size)->check(CLI::PositiveNumber);
    sub->add_option("--crop", o->train.crop_len)->check(CLI::PositiveNumber);
    sub->add_option("--lr", o->train.learning_rate)->check(CLI::PositiveNumber);
    sub->add_option("--t-sample-max", o->train.t_sample_max, "Largest training step, 0 for all");
    sub->add_option("--channels", o->train.arch.channels)->check(CLI::PositiveNumber);
    sub->add_option("--blocks", o->train.arch.blocks)->check(CLI::PositiveNumber);
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, false);
        StageTimer timer(ctx, "train-purifier");
        const auto waves = read_clips(ctx, list_wavs(o->corpus));
        const auto schedule = ctx.config.schedule.build();
        auto cfg = o->train;
        cfg.seed = ctx.config.seed("train.purifier");
        auto r = diffusion::train_purifier(waves, schedule, cfg);
        diffusion::save_purifier(o->out, r.model, schedule, ctx.config.purifier);
        ctx.add_output(o->out);
        ctx.manifest.fingerprints["purifier_schedule"] = schedule.fingerprint();
        ctx.manifest.metrics["epoch_loss"] = r.epoch_loss;
        *ctx.out << fmt::format("purifier loss {:.4f} -> {:.4f}\n", r.epoch_loss.front(), r.epoch_loss.back());
      };
    });
  }
  {
    struct Opts {
      std::string corpus, alignments, dict, purifier, noise, out;
      bool no_loop = false;
      std::vector<std::string> snr_levels;
      refiner::RefinerTrainingConfig train = pipeline::ToyExperimentConfig::default_refiner_training();
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("train-refiner", "Build augmented training pairs and train the score model");
    sub->add_option("corpus", o->corpus, "Clean WAV file or directory")->required();
    sub->add_option("--alignments", o->alignments, "Alignment directory")->required();
    sub->add_option("--dict", o->dict, "Phoneme dictionary")->required();
    sub->add_option("--purifier-ckpt", o->purifier, "Purifier checkpoint")->required();
    sub->add_option("--noise", o->noise, "Noise WAV file or directory")->required();
    sub->add_flag("--no-loop", o->no_loop, "Fail instead of looping noise shorter than speech");
    sub->add_option("--snr-levels", o->snr_levels, "Comma-separated SNR choices in dB; 'none' leaves a clip clean")
        ->delimiter(',');
    sub->add_option("-o,--out", o->out, "Checkpoint file")->required();
    sub->add_option("--steps", o->train.steps)->check(CLI::PositiveNumber);
    sub->add_option("--batch", o->train.batch_size)->check(CLI::PositiveNumber);
    sub->add_option("--crop-frames", o->train.crop_frames)->check(CLI::PositiveNumber);
    sub->add_option("--lr", o->train.learning_rate)->check(CLI::PositiveNumber);
    sub->add_option("--channels", o->train.arch.channels)->check(CLI::PositiveNumber);
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, false);
        StageTimer timer(ctx, "train-refiner");
        const auto files = list_wavs(o->corpus);
        const auto waves = read_clips(ctx, files);
        std::vector<phoneme::AlignedUtterance> corpus;
        for (std::size_t i = 0; i < files.size(); ++i) {
          corpus.push_back({waves[i], load_alignment(ctx, o->alignments, files[i].id)});
        }
        const auto noise = read_clips(ctx, list_wavs(o->noise));
        const auto dict = load_dictionary_checked(ctx, o->dict);
        const auto pur = load_purifier_checked(ctx, o->purifier);
        pipeline::PairBuildConfig pc;
        pc.noise_policy = o->no_loop ? pipeline::NoisePolicy::kNoLoop : pipeline::NoisePolicy::kLoop;
        if (!o->snr_levels.empty()) pc.snr_levels = parse_snr_levels(o->snr_levels);
        std::vector<pipeline::PairRecord> records;
        const auto pairs = pipeline::build_training_pairs(corpus, noise, {&pur.model, &pur.schedule}, dict,
                                                          ctx.config.seed("pairs"), pc, &records, ctx.workers());
        nlohmann::json levels = nlohmann::json::array();
        for (const auto& r : records) levels.push_back(r.snr_db ? nlohmann::json(*r.snr_db) : nlohmann::json(nullptr));
        ctx.manifest.metrics["pair_snr_db"] = levels;
        auto cfg = o->train;
        cfg.seed = ctx.config.seed("train.refiner");
        auto r = refiner::train_refiner(pairs, ctx.config.sde, cfg);
        refiner::save_refiner(o->out, r.model, ctx.config.sampler, ctx.config.stft, dict.fingerprint());
        ctx.add_output(o->out);
        ctx.manifest.metrics["loss_history"] = r.loss_history;
        *ctx.out << fmt::format("refiner loss {:.4f} -> {:.4f}\n", r.loss_history.front(), r.loss_history.back());
      };
    });
  }
  {
    struct Opts {
      std::string corpus, out;
      protect::EncoderTrainingConfig train;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("train-encoder", "Train the toy speaker encoder (speaker = id before '_')");
    sub->add_option("corpus", o->corpus, "WAV directory")->required();
    sub->add_option("-o,--out", o->out, "Checkpoint file")->required();
    sub->add_option("--steps", o->train.steps)->check(CLI::PositiveNumber);
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, false);
        StageTimer timer(ctx, "train-encoder");
        const auto files = list_wavs(o->corpus);
        const auto waves = read_clips(ctx, files);
        std::vector<protect::LabeledClip> labeled;
        for (std::size_t i = 0; i < files.size(); ++i) labeled.push_back({waves[i], speaker_of(files[i].id)});
        auto cfg = o->train;
        cfg.seed = ctx.config.seed("train.encoder");
        auto enc = protect::train_toy_encoder(labeled, cfg, ctx.config.stft);
        protect::save_encoder(o->out, enc);
        ctx.add_output(o->out);
      };
    });
  }
  {
    struct Opts {
      std::string out, cache;
      std::uint64_t seed = 0;
      int speakers = 2, train_clips = 40, test_clips = 10, refiner_steps = 0;
      std::optional<double> threshold;
      bool eer_threshold = false;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("toy-experiment", "Train everything on a synthetic corpus and run the ablation");
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->add_option("--seed", o->seed);
    sub->add_option("--speakers", o->speakers)->check(CLI::Range(2, 100));
    sub->add_option("--train-clips", o->train_clips)->check(CLI::PositiveNumber);
    sub->add_option("--test-clips", o->test_clips)->check(CLI::PositiveNumber);
    sub->add_option("--refiner-steps", o->refiner_steps, "0 keeps the default");
    sub->add_option("--cache", o->cache, "Directory for trained models");
    auto* thr = sub->add_option("--threshold", o->threshold, "SVA threshold (default 0.25)")->check(CLI::Range(-1.0, 1.0));
    sub->add_flag("--eer-threshold", o->eer_threshold, "Use the clean EER threshold")->excludes(thr);
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "toy-experiment");
        pipeline::ToyExperimentConfig cfg;
        cfg.seed = o->seed;
        cfg.speakers = o->speakers;
        cfg.train_clips_per_speaker = o->train_clips;
        cfg.test_clips_per_speaker = o->test_clips;
        if (o->refiner_steps > 0) cfg.refiner_training.steps = o->refiner_steps;
        if (o->threshold) cfg.threshold = o->threshold;
        if (o->eer_threshold) cfg.threshold.reset();
        cfg.cache_dir = o->cache;
        if (!o->cache.empty()) fs::create_directories(o->cache);
        cfg.workers = ctx.workers();
        const auto r = pipeline::run_toy_experiment(cfg);
        auto j = r.to_json();
        for (const auto& [stage, secs] : r.timings) ctx.manifest.timings[stage] = secs;
        j.erase("timings");
        ctx.manifest.metrics = j;
        ctx.write_output(ctx.output() / "result.json", j.dump(2) + "\n");
        ctx.write_output(ctx.output() / "ablation.csv", r.table.to_csv());
        *ctx.out << r.table.to_csv();
        *ctx.out << fmt::format("clean sva {:.3f}, protected sva {:.3f}, ordering holds: {}\n",
                                r.table.clean.sva(), r.table.protected_input.sva(), r.ordering_holds());
      };
    });
  }
}

}  // namespace vpure::cli
