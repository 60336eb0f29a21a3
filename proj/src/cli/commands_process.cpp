#include <fmt/format.h>

#include "common.hpp"
#include "vpure/common/error.hpp"
#include "vpure/common/parallel.hpp"
#include "vpure/pipeline/stages.hpp"
#include "vpure/protect/attack.hpp"

namespace vpure::cli {
namespace {

/// Models named on the command line, loaded and cross-checked.
struct LoadedModels {
  std::optional<LoadedPurifier> purifier;
  std::optional<phoneme::PhonemeDictionary> dict;
  std::optional<refiner::RefinerCheckpoint> refiner;

  pipeline::StageModels view(const Context& ctx) const {
    pipeline::StageModels m;
    if (purifier) {
      m.purifier = &purifier->model;
      m.schedule = &purifier->schedule;
    }
    m.purifier_settings = ctx.config.purifier;
    if (refiner) m.refiner = &refiner->model;
    m.sde = ctx.config.sde;
    m.sampler = ctx.config.sampler;
    m.dictionary = dict ? &*dict : nullptr;
    m.stft = ctx.config.stft;
    return m;
  }
};

LoadedModels load_models(Context& ctx, const std::string& purifier, const std::string& refiner,
                         const std::string& dict) {
  LoadedModels m;
  if (!purifier.empty()) m.purifier.emplace(load_purifier_checked(ctx, purifier));
  if (!dict.empty()) m.dict.emplace(load_dictionary_checked(ctx, dict));
  if (!refiner.empty()) {
    if (!m.dict) throw Error(ErrorKind::kConfig, "--refiner-ckpt needs --dict");
    m.refiner.emplace(load_refiner_checked(ctx, refiner, *m.dict));
  }
  return m;
}

std::vector<phoneme::AlignedTranscript> load_alignments(Context& ctx, const std::string& dir,
                                                        const std::vector<ClipFile>& files) {
  std::vector<phoneme::AlignedTranscript> out;
  for (const auto& f : files) out.push_back(load_alignment(ctx, dir, f.id));
  return out;
}

std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) s += (c == ' ' || c == '/') ? '_' : c;
  return s;
}

void process_files(Context& ctx, const std::vector<ClipFile>& files,
                   const std::vector<audio::Waveform>& inputs,
                   const std::vector<phoneme::AlignedTranscript>& transcripts,
                   const pipeline::StageModels& models, const pipeline::StageToggles& toggles) {
  std::vector<audio::Waveform> out(files.size());
  const std::uint64_t ps = ctx.config.seed("purify"), rs = ctx.config.seed("refine");
  parallel_for(files.size(), ctx.workers(), [&](std::size_t i) {
    out[i] = pipeline::process_clip(inputs[i], transcripts.empty() ? nullptr : &transcripts[i], models,
                                    toggles, pipeline::clip_seed(ps, "purify", files[i].id),
                                    pipeline::clip_seed(rs, "refine", files[i].id));
  });
  for (std::size_t i = 0; i < files.size(); ++i) {
    ctx.write_wav_output(ctx.output() / (files[i].id + ".wav"), out[i]);
  }
  ctx.manifest.metrics["stages"] = toggles.to_json();
  ctx.manifest.metrics["clips"] = files.size();
}

}  // namespace

void add_processing_commands(CLI::App& app, Action& action) {
  {
    struct Opts {
      std::string in, encoder, out, mode = "untargeted", target, purifier;
      std::optional<double> eps, step;
      std::optional<int> iters;
      bool adaptive = false;
      int eot = 4;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("protect", "Add protective perturbations (embedding attack)");
    sub->add_option("in", o->in, "WAV file or directory")->required();
    sub->add_option("--encoder", o->encoder, "Speaker encoder checkpoint")->required();
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->add_option("--eps", o->eps, "L-inf budget");
    sub->add_option("--step", o->step, "Step size");
    sub->add_option("--iters", o->iters, "Iterations");
    sub->add_option("--mode", o->mode, "untargeted or targeted")->check(CLI::IsMember({"untargeted", "targeted"}));
    sub->add_option("--target", o->target, "WAV whose embedding is the target (targeted mode)");
    sub->add_flag("--adaptive", o->adaptive, "BPDA+EOT through the purifier");
    sub->add_option("--eot", o->eot, "Purifier draws per iteration")->check(CLI::PositiveNumber);
    sub->add_option("--purifier-ckpt", o->purifier, "Purifier checkpoint (adaptive mode)");
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "protect");
        auto pc = ctx.config.protection;
        if (o->eps) pc.epsilon = *o->eps;
        if (o->step) pc.step_size = *o->step;
        if (o->iters) pc.n_iters = *o->iters;
        if (o->adaptive && !o->iters) pc.n_iters = protect::kAdaptiveIterations;
        pc.mode = o->mode == "targeted" ? protect::AttackMode::kTargetedToward : protect::AttackMode::kUntargetedAway;
        const auto enc = load_encoder_checked(ctx, o->encoder);
        if (pc.mode == protect::AttackMode::kTargetedToward) {
          if (o->target.empty()) throw Error(ErrorKind::kConfig, "targeted mode needs --target");
          ctx.add_input(o->target);
          pc.target_embedding = enc.embed(audio::read_wav(o->target));
        }
        try {
          pc.validate();
        } catch (const Error& e) {
          throw Error(ErrorKind::kConfig, e.what());
        }
        std::optional<LoadedPurifier> pur;
        if (o->adaptive) {
          if (o->purifier.empty()) throw Error(ErrorKind::kConfig, "--adaptive needs --purifier-ckpt");
          pur.emplace(load_purifier_checked(ctx, o->purifier));
        }
        const auto files = list_wavs(o->in);
        const auto waves = read_clips(ctx, files);
        const std::uint64_t seed = ctx.config.seed("protect");
        std::vector<audio::Waveform> adv(files.size());
        auto attack_one = [&](std::size_t i, std::size_t workers) {
          const auto s = pipeline::clip_seed(seed, "protect", files[i].id);
          audio::Waveform a;
          if (pur) {
            const protect::PurifyFn fn = [&](const audio::Waveform& w, std::uint64_t k) {
              return diffusion::purify(w, pur->model, pur->schedule, ctx.config.purifier, k);
            };
            a = protect::bpda_eot_protect(waves[i], enc, fn, o->eot, pc, s, workers);
          } else {
            a = protect::embedding_attack(waves[i], enc, pc, s);
          }
          adv[i] = protect::quantize_pcm16_within_budget(waves[i], a, pc.epsilon);
        };
        if (pur) {
          for (std::size_t i = 0; i < files.size(); ++i) attack_one(i, ctx.workers());
        } else {
          parallel_for(files.size(), ctx.workers(), [&](std::size_t i) { attack_one(i, 1); });
        }
        nlohmann::json records = nlohmann::json::array();
        double mean_disp = 0.0;
        for (std::size_t i = 0; i < files.size(); ++i) {
          ctx.write_wav_output(ctx.output() / (files[i].id + ".wav"), adv[i]);
          protect::ProtectionRecord r;
          r.config = pc;
          r.seed = pipeline::clip_seed(seed, "protect", files[i].id);
          r.iterations = pc.n_iters;
          r.eot_size = o->adaptive ? o->eot : 0;
          r.displacement = 1.0 - protect::cosine(enc.embed(adv[i]), enc.embed(waves[i]));
          r.budget_ok = protect::within_budget(waves[i], adv[i], pc.epsilon);
          mean_disp += r.displacement / static_cast<double>(files.size());
          auto j = r.to_json();
          j["id"] = files[i].id;
          records.push_back(j);
        }
        ctx.write_output(ctx.output() / "protection.json", records.dump(2) + "\n");
        ctx.manifest.metrics["mean_displacement"] = mean_disp;
        *ctx.out << fmt::format("protected {} clips, mean embedding displacement {:.3f}\n", files.size(), mean_disp);
      };
    });
  }
  {
    struct Opts {
      std::string in, purifier, out;
      std::optional<int> t_pur;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("purify", "Stage 1: diffuse and denoise in the waveform domain");
    sub->add_option("in", o->in, "WAV file or directory")->required();
    sub->add_option("--purifier-ckpt", o->purifier, "Purifier checkpoint")->required();
    sub->add_option("--t-pur", o->t_pur, "Diffusion steps");
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "purify");
        if (o->t_pur) ctx.config.purifier.t_pur = *o->t_pur;
        ctx.config.validate();
        const auto models = load_models(ctx, o->purifier, "", "");
        const auto files = list_wavs(o->in);
        process_files(ctx, files, read_clips(ctx, files), {}, models.view(ctx), {true, false, false});
      };
    });
  }
  {
    struct Opts {
      std::string in, refiner, dict, alignments, out, guidance = "aligned";
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("refine", "Stage 2: phoneme-guided refinement");
    sub->add_option("in", o->in, "WAV file or directory")->required();
    sub->add_option("--refiner-ckpt", o->refiner, "Refiner checkpoint")->required();
    sub->add_option("--dict", o->dict, "Phoneme dictionary")->required();
    sub->add_option("--alignments", o->alignments, "Alignment directory (aligned guidance)");
    sub->add_option("--guidance", o->guidance, "aligned or global")->check(CLI::IsMember({"aligned", "global"}));
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "refine");
        const bool aligned = o->guidance == "aligned";
        if (aligned && o->alignments.empty()) throw Error(ErrorKind::kConfig, "aligned guidance needs --alignments");
        const auto models = load_models(ctx, "", o->refiner, o->dict);
        const auto files = list_wavs(o->in);
        const auto waves = read_clips(ctx, files);
        const auto tr = aligned ? load_alignments(ctx, o->alignments, files) : std::vector<phoneme::AlignedTranscript>{};
        process_files(ctx, files, waves, tr, models.view(ctx), {false, true, aligned});
      };
    });
  }
  {
    struct Opts {
      std::string in, purifier, refiner, dict, alignments, out;
      bool no_purification = false, no_refinement = false, no_phoneme = false;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("run", "Full two-stage pipeline: purify then refine");
    sub->add_option("in", o->in, "WAV file or directory")->required();
    sub->add_option("--purifier-ckpt", o->purifier, "Purifier checkpoint");
    sub->add_option("--refiner-ckpt", o->refiner, "Refiner checkpoint");
    sub->add_option("--dict", o->dict, "Phoneme dictionary");
    sub->add_option("--alignments", o->alignments, "Alignment directory");
    sub->add_flag("--no-purification", o->no_purification);
    sub->add_flag("--no-refinement", o->no_refinement);
    sub->add_flag("--no-phoneme", o->no_phoneme, "Global-average phoneme representation");
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "run");
        const pipeline::StageToggles t{!o->no_purification, !o->no_refinement, !o->no_phoneme};
        if (t.purification && o->purifier.empty()) throw Error(ErrorKind::kConfig, "run needs --purifier-ckpt");
        if (t.refinement && (o->refiner.empty() || o->dict.empty())) {
          throw Error(ErrorKind::kConfig, "run needs --refiner-ckpt and --dict");
        }
        const bool aligned = t.refinement && t.phoneme;
        if (aligned && o->alignments.empty()) throw Error(ErrorKind::kConfig, "run needs --alignments");
        const auto models = load_models(ctx, t.purification ? o->purifier : "",
                                        t.refinement ? o->refiner : "", t.refinement ? o->dict : "");
        const auto files = list_wavs(o->in);
        const auto waves = read_clips(ctx, files);
        const auto tr = aligned ? load_alignments(ctx, o->alignments, files) : std::vector<phoneme::AlignedTranscript>{};
        process_files(ctx, files, waves, tr, models.view(ctx), t);
      };
    });
  }
  {
    struct Opts {
      std::string in, clean, purifier, refiner, dict, alignments, encoder, enroll, eer_from, out;
      std::optional<double> threshold;
      bool write_audio = false;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("ablate", "Run the four-row stage ablation on protected clips");
    sub->add_option("in", o->in, "Protected WAV directory")->required();
    sub->add_option("--clean", o->clean, "Clean WAV directory with the same ids")->required();
    sub->add_option("--purifier-ckpt", o->purifier)->required();
    sub->add_option("--refiner-ckpt", o->refiner)->required();
    sub->add_option("--dict", o->dict)->required();
    sub->add_option("--alignments", o->alignments)->required();
    sub->add_option("--encoder", o->encoder)->required();
    sub->add_option("--enroll", o->enroll, "Directory of <speaker>.wav enrollment clips");
    auto* thr = sub->add_option("--threshold", o->threshold, "Verification threshold");
    sub->add_option("--eer-from", o->eer_from, "Score file whose EER threshold to use")->excludes(thr);
    sub->add_flag("--write-audio", o->write_audio, "Also write every row's processed clips");
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "ablate");
        const auto models = load_models(ctx, o->purifier, o->refiner, o->dict);
        const auto enc = load_encoder_checked(ctx, o->encoder);
        const auto files = list_wavs(o->in);
        const auto prot = read_clips(ctx, files);
        std::vector<pipeline::EvalClip> clips;
        for (const auto& f : files) {
          const auto p = fs::path(o->clean) / (f.id + ".wav");
          if (!fs::exists(p)) throw Error(ErrorKind::kData, "no clean clip for '" + f.id + "'");
          ctx.add_input(p);
          clips.push_back({f.id, speaker_of(f.id), audio::read_wav(p)});
        }
        const auto tr = load_alignments(ctx, o->alignments, files);
        std::vector<const phoneme::AlignedTranscript*> trp;
        for (const auto& t : tr) trp.push_back(&t);
        pipeline::EvalContext ec{&enc, resolve_threshold(ctx, o->threshold, o->eer_from),
                                 o->enroll.empty() ? std::map<std::string, audio::Waveform>{} : load_enrollment(ctx, o->enroll),
                                 ctx.workers()};
        const auto r = pipeline::run_ablation(clips, prot, trp, models.view(ctx), ec, ctx.config.seed("purify"),
                                              ctx.config.seed("refine"));
        const auto& table = r.table;
        ctx.write_output(ctx.output() / "ablation.json", table.to_json().dump(2) + "\n");
        ctx.write_output(ctx.output() / "ablation.csv", table.to_csv());
        auto write_reports = [&](const pipeline::ConditionResult& c) {
          const auto dir = ctx.output() / slug(c.name);
          ctx.write_output(dir / "verification.json", c.verification.to_json().dump(2) + "\n");
          ctx.write_output(dir / "similarity.json", c.similarity.to_json().dump(2) + "\n");
        };
        write_reports(table.clean);
        write_reports(table.protected_input);
        for (std::size_t k = 0; k < table.rows.size(); ++k) {
          write_reports(table.rows[k]);
          if (o->write_audio) {
            for (std::size_t i = 0; i < files.size(); ++i) {
              ctx.write_wav_output(ctx.output() / slug(table.rows[k].name) / "wav" / (files[i].id + ".wav"),
                                   r.processed[k][i]);
            }
          }
        }
        ctx.manifest.metrics = table.to_json();
        ctx.manifest.metrics["grid"] = nlohmann::json::array();
        for (const auto& t : table.toggles) ctx.manifest.metrics["grid"].push_back(t.to_json());
        *ctx.out << table.to_csv();
      };
    });
  }
}

}  // namespace vpure::cli
