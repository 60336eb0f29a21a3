#include "vpure/pipeline/pairs.hpp"

#include <cmath>

#include "vpure/common/error.hpp"
#include "vpure/common/parallel.hpp"
#include "vpure/common/random.hpp"

namespace vpure::pipeline {
namespace {

double power(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

}  // namespace

audio::Waveform mix_at_snr(const audio::Waveform& clean, const audio::Waveform& noise,
                           double snr_db) {
  if (clean.empty()) throw invalid_input("mix_at_snr: empty clean clip");
  if (noise.size() < clean.size()) throw invalid_input("mix_at_snr: noise shorter than speech");
  if (!std::isfinite(snr_db)) throw invalid_input("mix_at_snr: SNR must be finite");
  const std::vector<double> seg(noise.samples.begin(), noise.samples.begin() + clean.size());
  const double pn = power(seg);
  if (pn == 0.0) throw Error(ErrorKind::kDegenerate, "mix_at_snr: silent noise segment");
  const double g = std::sqrt(power(clean.samples) / (pn * std::pow(10.0, snr_db / 10.0)));
  audio::Waveform out = clean;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += g * seg[i];
  return out;
}

audio::Waveform noise_segment(const audio::Waveform& noise, std::size_t offset, std::size_t n,
                              NoisePolicy policy) {
  if (noise.empty()) throw Error(ErrorKind::kData, "noise clip is empty");
  if (policy == NoisePolicy::kNoLoop && offset + n > noise.size()) {
    throw Error(ErrorKind::kData, "noise clip shorter than speech and looping is disabled");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = noise.samples[(offset + i) % noise.size()];
  return audio::Waveform(std::move(out), noise.sample_rate);
}

std::vector<refiner::TrainingPair> build_training_pairs(
    const std::vector<phoneme::AlignedUtterance>& clean_corpus,
    const std::vector<audio::Waveform>& noise_corpus, const PurifierHandle& purifier,
    const phoneme::PhonemeDictionary& dictionary, std::uint64_t seed,
    const PairBuildConfig& config, std::vector<PairRecord>* records, std::size_t workers) {
  if (clean_corpus.empty()) throw invalid_input("build_training_pairs: empty clean corpus");
  if (noise_corpus.empty()) throw invalid_input("build_training_pairs: empty noise corpus");
  if (config.snr_levels.empty()) throw invalid_input("build_training_pairs: no SNR levels");
  if (!purifier.model || !purifier.schedule) throw invalid_input("build_training_pairs: no purifier");

  const std::size_t n = clean_corpus.size();
  std::vector<refiner::TrainingPair> pairs(n);
  std::vector<PairRecord> recs(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& clip = clean_corpus[i].wave;
    Rng rng(derive_seed(seed, "pairs.clip", i));
    PairRecord& r = recs[i];
    r.snr_db = config.snr_levels[std::uniform_int_distribution<std::size_t>(
        0, config.snr_levels.size() - 1)(rng)];
    r.purifier_input = clip;
    if (r.snr_db) {
      r.noise_index = std::uniform_int_distribution<std::size_t>(0, noise_corpus.size() - 1)(rng);
      const auto& noise = noise_corpus[r.noise_index];
      // Under kNoLoop a short noise clip fails below regardless of offset.
      const std::size_t span = noise.size() > clip.size() ? noise.size() - clip.size() : 0;
      r.noise_offset = std::uniform_int_distribution<std::size_t>(0, span)(rng);
      const auto seg = noise_segment(noise, r.noise_offset, clip.size(), config.noise_policy);
      r.purifier_input = mix_at_snr(clip, seg, *r.snr_db);
    }
    r.purified = diffusion::purify(r.purifier_input, *purifier.model, *purifier.schedule,
                                   {.t_pur = config.t_pur}, derive_seed(seed, "pairs.purify", i));
    pairs[i] = refiner::make_training_pair(clip, r.purified, clean_corpus[i].transcript, dictionary);
  });
  if (records) *records = std::move(recs);
  return pairs;
}

}  // namespace vpure::pipeline
