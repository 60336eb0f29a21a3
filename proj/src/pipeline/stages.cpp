#include "vpure/pipeline/stages.hpp"

#include <fmt/format.h>

#include <sstream>

#include "vpure/common/error.hpp"
#include "vpure/common/parallel.hpp"
#include "vpure/common/random.hpp"

namespace vpure::pipeline {

std::string StageToggles::name() const {
  if (purification && refinement && phoneme) return "full";
  if (!purification && refinement && phoneme) return "w/o purification";
  if (purification && !refinement) return "w/o refinement";
  if (purification && refinement && !phoneme) return "w/o phoneme";
  return fmt::format("purification={} refinement={} phoneme={}", purification, refinement, phoneme);
}

nlohmann::json StageToggles::to_json() const {
  return {{"purification", purification}, {"refinement", refinement}, {"phoneme", phoneme}};
}

const std::vector<StageToggles>& ablation_grid() {
  static const std::vector<StageToggles> grid = {
      {false, true, true}, {true, false, true}, {true, true, false}, {true, true, true}};
  return grid;
}

audio::Waveform process_clip(const audio::Waveform& x, const phoneme::AlignedTranscript* transcript,
                             const StageModels& models, const StageToggles& toggles,
                             std::uint64_t purify_seed, std::uint64_t refine_seed) {
  if (!toggles.purification && !toggles.refinement) return x;
  audio::Waveform y = x;
  if (toggles.purification) {
    if (!models.purifier || !models.schedule) throw invalid_input("process_clip: no purifier loaded");
    y = diffusion::purify(y, *models.purifier, *models.schedule, models.purifier_settings, purify_seed);
  }
  if (toggles.refinement) {
    if (!models.refiner) throw invalid_input("process_clip: no refiner loaded");
    refiner::RefineRequest rq{transcript, models.dictionary,
                              toggles.phoneme ? refiner::PhonemeGuidance::kAligned
                                              : refiner::PhonemeGuidance::kGlobalAverage};
    y = refiner::refine_waveform(y, rq, *models.refiner, models.sde, models.sampler, refine_seed,
                                 models.stft);
  }
  return y;
}

std::uint64_t clip_seed(std::uint64_t base, const std::string& stage, const std::string& clip_id) {
  return derive_seed(base, stage + "." + clip_id);
}

nlohmann::json ConditionResult::summary_json() const {
  const auto& s = similarity.summary;
  return {{"condition", name},
          {"sva", sva()},
          {"threshold", verification.threshold},
          {"similarity", {{"mean", s.mean}, {"median", s.median}, {"q25", s.q25}, {"q75", s.q75},
                          {"min", s.min}, {"max", s.max}, {"count", s.count}}}};
}

ConditionResult evaluate_condition(const std::string& name, const std::vector<EvalClip>& clips,
                                   const std::vector<audio::Waveform>& processed,
                                   const EvalContext& context) {
  if (!context.encoder) throw invalid_input("evaluate_condition: no encoder");
  if (clips.size() != processed.size()) throw invalid_input("evaluate_condition: length mismatch");
  if (clips.empty()) throw invalid_input("evaluate_condition: no clips");
  const auto& enc = *context.encoder;

  std::map<std::string, std::vector<double>> enrolled;
  for (const auto& [spk, wave] : context.enrollment) enrolled[spk] = enc.embed(wave);

  const std::size_t n = clips.size();
  std::vector<double> scores(n);
  std::vector<std::string> ids(n);
  std::vector<eval::NamedWave> clean(n), proc(n);
  parallel_for(n, context.workers, [&](std::size_t i) {
    const auto e = enc.embed(processed[i]);
    const auto it = enrolled.find(clips[i].speaker);
    const auto ref = it != enrolled.end() ? it->second : enc.embed(clips[i].clean);
    scores[i] = protect::cosine(e, ref);
  });
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = clips[i].id;
    clean[i] = {clips[i].id, clips[i].clean};
    proc[i] = {clips[i].id, processed[i]};
  }
  ConditionResult r;
  r.name = name;
  r.verification = eval::verify_scores(ids, scores, context.threshold, name);
  r.similarity = eval::embedding_similarity_report(clean, proc, enc, name, context.workers);
  return r;
}

const ConditionResult& AblationTable::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw Error(ErrorKind::kLookup, "ablation table has no row '" + name + "'");
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto j = rows[i].summary_json();
    j["toggles"] = toggles[i].to_json();
    rs.push_back(j);
  }
  return {{"rows", rs}, {"baselines", {clean.summary_json(), protected_input.summary_json()}}};
}

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  os << "condition,purification,refinement,phoneme,sva,mean_similarity\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << fmt::format("{},{},{},{},{:.6f},{:.6f}\n", rows[i].name, int(toggles[i].purification),
                      int(toggles[i].refinement), int(toggles[i].phoneme), rows[i].sva(),
                      rows[i].mean_similarity());
  }
  return os.str();
}

AblationOutputs run_ablation(const std::vector<EvalClip>& clips,
                             const std::vector<audio::Waveform>& protected_clips,
                             const std::vector<const phoneme::AlignedTranscript*>& transcripts,
                             const StageModels& models, const EvalContext& context,
                             std::uint64_t purify_seed, std::uint64_t refine_seed) {
  if (clips.size() != protected_clips.size() || clips.size() != transcripts.size()) {
    throw invalid_input("run_ablation: clips, protected clips and transcripts differ in count");
  }
  AblationOutputs out;
  std::vector<audio::Waveform> clean_waves;
  for (const auto& c : clips) clean_waves.push_back(c.clean);
  out.table.clean = evaluate_condition("clean", clips, clean_waves, context);
  out.table.protected_input = evaluate_condition("protected", clips, protected_clips, context);
  for (const auto& t : ablation_grid()) {
    std::vector<audio::Waveform> processed(clips.size());
    parallel_for(clips.size(), context.workers, [&](std::size_t i) {
      processed[i] = process_clip(protected_clips[i], transcripts[i], models, t,
                                  clip_seed(purify_seed, "purify", clips[i].id),
                                  clip_seed(refine_seed, "refine", clips[i].id));
    });
    out.table.rows.push_back(evaluate_condition(t.name(), clips, processed, context));
    out.table.toggles.push_back(t);
    out.processed.push_back(std::move(processed));
  }
  return out;
}

}  // namespace vpure::pipeline
