#include <fmt/format.h>

#include "common.hpp"
#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"
#include "vpure/eval/plot.hpp"
#include "vpure/pipeline/stages.hpp"

namespace vpure::cli {

void add_report_commands(CLI::App& app, Action& action) {
  {
    struct Opts {
      std::string clean, processed, encoder, enroll, eer_from, out, condition = "processed";
      std::optional<double> threshold;
      bool accepted_only = false;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("evaluate", "Speaker verification accuracy and embedding similarity");
    sub->add_option("clean", o->clean, "Clean WAV directory")->required();
    sub->add_option("processed", o->processed, "Processed WAV directory (same ids)")->required();
    sub->add_option("--encoder", o->encoder, "Speaker encoder checkpoint")->required();
    sub->add_option("--enroll", o->enroll, "Directory of <speaker>.wav enrollment clips");
    auto* thr = sub->add_option("--threshold", o->threshold, "Verification threshold");
    sub->add_option("--eer-from", o->eer_from, "Score file whose EER threshold to use")->excludes(thr);
    sub->add_flag("--accepted-only", o->accepted_only,
                  "Keep only clips whose clean version is accepted by the verifier");
    sub->add_option("--condition", o->condition, "Label stored in the reports");
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        StageTimer timer(ctx, "evaluate");
        const auto enc = load_encoder_checked(ctx, o->encoder);
        const auto files = list_wavs(o->processed);
        const auto processed = read_clips(ctx, files);
        std::vector<pipeline::EvalClip> clips;
        for (const auto& f : files) {
          const auto p = fs::path(o->clean) / (f.id + ".wav");
          if (!fs::exists(p)) throw Error(ErrorKind::kData, "no clean clip for '" + f.id + "'");
          ctx.add_input(p);
          clips.push_back({f.id, speaker_of(f.id), audio::read_wav(p)});
        }
        pipeline::EvalContext ec{&enc, resolve_threshold(ctx, o->threshold, o->eer_from),
                                 o->enroll.empty() ? std::map<std::string, audio::Waveform>{} : load_enrollment(ctx, o->enroll),
                                 ctx.workers()};

        // Clean genuine/impostor scores; usable later through --eer-from.
        if (ec.enrollment.size() >= 2) {
          std::vector<double> genuine, impostor;
          for (const auto& [spk, wave] : ec.enrollment) {
            const auto e = enc.embed(wave);
            for (const auto& c : clips) {
              (c.speaker == spk ? genuine : impostor).push_back(protect::cosine(enc.embed(c.clean), e));
            }
          }
          if (!genuine.empty() && !impostor.empty()) {
            const auto eer = eval::eer_threshold(genuine, impostor);
            ctx.write_output(ctx.output() / "clean_scores.json",
                             nlohmann::json{{"genuine", genuine}, {"impostor", impostor},
                                            {"eer", eer.eer}, {"threshold", eer.threshold}}.dump(2) + "\n");
          }
        }

        std::vector<audio::Waveform> kept;
        if (o->accepted_only) {
          std::vector<audio::Waveform> clean_waves;
          for (const auto& c : clips) clean_waves.push_back(c.clean);
          const auto base = pipeline::evaluate_condition("clean", clips, clean_waves, ec);
          std::vector<pipeline::EvalClip> keep_clips;
          for (std::size_t i = 0; i < clips.size(); ++i) {
            if (base.verification.per_sample[i].accept) {
              keep_clips.push_back(clips[i]);
              kept.push_back(processed[i]);
            }
          }
          ctx.manifest.metrics["filtered_out"] = clips.size() - keep_clips.size();
          if (keep_clips.empty()) throw Error(ErrorKind::kData, "no clean clip passes verification");
          clips = std::move(keep_clips);
        } else {
          kept = processed;
        }
        const auto r = pipeline::evaluate_condition(o->condition, clips, kept, ec);
        ctx.write_output(ctx.output() / "verification.json", r.verification.to_json().dump(2) + "\n");
        ctx.write_output(ctx.output() / "verification.csv", r.verification.to_csv());
        ctx.write_output(ctx.output() / "similarity.json", r.similarity.to_json().dump(2) + "\n");
        ctx.write_output(ctx.output() / "similarity.csv", r.similarity.to_csv());
        ctx.manifest.metrics["summary"] = r.summary_json();
        *ctx.out << fmt::format("{}: sva {:.3f} at threshold {:.3f}, mean similarity {:.3f} over {} clips\n",
                                o->condition, r.sva(), ec.threshold, r.mean_similarity(), clips.size());
      };
    });
  }
  {
    struct Opts {
      std::vector<std::string> reports;
      std::string out;
    };
    auto o = std::make_shared<Opts>();
    auto* sub = app.add_subcommand("plot", "SVG figures from report files");
    sub->add_option("reports", o->reports, "verification.json, similarity.json or ablation.json files")->required();
    sub->add_option("-o,--out", o->out, "Output directory")->required();
    sub->callback([&action, o] {
      action = [o](Context& ctx) {
        ctx.set_output(o->out, true);
        std::vector<eval::Series> sims, scores;
        std::vector<std::pair<std::string, double>> sva_bars, abl_sva, abl_sim;
        for (const auto& path : o->reports) {
          ctx.add_input(path);
          nlohmann::json j;
          try {
            j = nlohmann::json::parse(read_text_file(path));
          } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::kData, path + ": " + e.what());
          }
          const auto kind = j.value("kind", std::string());
          if (kind == "similarity") {
            const auto r = eval::SimilarityReport::from_json(j);
            sims.push_back({r.condition.empty() ? path : r.condition, r.similarity});
          } else if (kind == "verification") {
            const auto r = eval::VerificationReport::from_json(j);
            std::vector<double> s;
            for (const auto& x : r.per_sample) s.push_back(x.score);
            const auto label = r.condition.empty() ? path : r.condition;
            scores.push_back({label, s});
            sva_bars.push_back({label, r.sva});
          } else if (j.contains("rows")) {
            for (const auto& row : j.at("rows")) {
              abl_sva.push_back({row.at("condition"), row.at("sva")});
              abl_sim.push_back({row.at("condition"), row.at("similarity").at("mean")});
            }
          } else {
            throw Error(ErrorKind::kData, path + ": not a report file");
          }
        }
        const fs::path dir = ctx.output();
        if (!sims.empty()) {
          ctx.write_output(dir / "similarity.svg",
                           eval::histogram_svg(sims, "Embedding similarity to clean", "cosine similarity"));
        }
        if (!scores.empty()) {
          ctx.write_output(dir / "scores.svg", eval::histogram_svg(scores, "Verification scores", "cosine score"));
          ctx.write_output(dir / "sva.svg", eval::bar_svg(sva_bars, "Speaker verification accuracy"));
        }
        if (!abl_sva.empty()) {
          ctx.write_output(dir / "ablation_sva.svg", eval::bar_svg(abl_sva, "Ablation: SVA"));
          ctx.write_output(dir / "ablation_similarity.svg", eval::bar_svg(abl_sim, "Ablation: mean similarity"));
        }
      };
    });
  }
}

}  // namespace vpure::cli
