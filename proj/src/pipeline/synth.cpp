#include "vpure/pipeline/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vpure/common/error.hpp"
#include "vpure/common/random.hpp"

namespace vpure::pipeline {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFade = 0.012;  // seconds

struct Vowel {
  std::array<double, 3> formants;
};

const std::vector<std::pair<std::string, Vowel>>& vowel_table() {
  static const std::vector<std::pair<std::string, Vowel>> table = {
      {"AA", {{730.0, 1090.0, 2440.0}}},
      {"IY", {{270.0, 2290.0, 3010.0}}},
      {"UW", {{300.0, 870.0, 2240.0}}},
      {"EH", {{530.0, 1840.0, 2480.0}}},
  };
  return table;
}

const Vowel* find_vowel(const std::string& label) {
  for (const auto& [name, v] : vowel_table())
    if (name == label) return &v;
  return nullptr;
}

double envelope(double f, const Vowel& v, const SyntheticSpeaker& spk) {
  static constexpr std::array<double, 3> gains = {1.0, 0.6, 0.3};
  static constexpr std::array<double, 3> widths = {80.0, 100.0, 150.0};
  double a = 0.02;
  for (int i = 0; i < 3; ++i) {
    const double d = (f - v.formants[i] * spk.formant_scale) / widths[i];
    a += gains[i] / std::sqrt(1.0 + d * d);
  }
  const double octaves = std::log2(std::max(f, 500.0) / 500.0);
  return a * std::pow(10.0, spk.tilt_db * octaves / 20.0);
}

// Raised-cosine gate: 1 inside [a, b], fading over kFade on both sides.
double gate(double t, double a, double b) {
  if (t < a - kFade || t > b + kFade) return 0.0;
  if (t < a) return 0.5 - 0.5 * std::cos(std::numbers::pi * (t - (a - kFade)) / kFade);
  if (t > b) return 0.5 + 0.5 * std::cos(std::numbers::pi * (t - b) / kFade);
  return 1.0;
}

}  // namespace

const std::vector<std::string>& synth_phonemes() {
  static const std::vector<std::string> labels = {"AA", "IY", "UW", "EH", "S"};
  return labels;
}

std::vector<SyntheticSpeaker> make_speakers(int count, std::uint64_t seed) {
  if (count < 1) throw invalid_input("make_speakers: count must be positive");
  Rng rng(derive_seed(seed, "synth.speakers"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<SyntheticSpeaker> out;
  for (int i = 0; i < count; ++i) {
    SyntheticSpeaker s;
    s.id = "spk" + std::to_string(i);
    s.f0 = 100.0 + 130.0 * (i + u(rng)) / count;
    s.formant_scale = 0.88 + 0.27 * (order[i] + u(rng)) / count;
    s.tilt_db = -9.0 + 5.0 * u(rng);
    out.push_back(s);
  }
  return out;
}

SynthClip synth_utterance(const SyntheticSpeaker& speaker, std::uint64_t seed, double seconds,
                          const std::string& id) {
  if (!(seconds >= 0.3)) throw invalid_input("synth_utterance: clip must be at least 0.3 s");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(seconds * audio::kSampleRate));

  std::vector<phoneme::PhonemeInterval> intervals;
  double t = 0.04 + 0.06 * u(rng);
  const double stop = seconds - (0.04 + 0.06 * u(rng));
  const auto& labels = synth_phonemes();
  std::string prev;
  while (stop - t >= 0.06) {
    std::string label;
    do {
      label = labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)];
    } while (label == prev);
    const double dur = std::min(0.10 + 0.12 * u(rng), stop - t);
    intervals.push_back({label, t, t + dur});
    prev = label;
    t += dur;
  }

  const double f0 = speaker.f0 * (0.96 + 0.08 * u(rng));
  const double vib_rate = 2.0 + 3.0 * u(rng);
  const double vib_phase = kTwoPi * u(rng);
  std::vector<double> phase(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / audio::kSampleRate;
    acc += kTwoPi * f0 * (1.0 + 0.03 * std::sin(kTwoPi * vib_rate * ti + vib_phase)) /
           audio::kSampleRate;
    phase[i] = acc;
  }
  const int n_harm = static_cast<int>(7800.0 / (f0 * 1.03));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = 5e-4 * gauss(rng);
  std::vector<double> white(n);
  for (const auto& iv : intervals) {
    const auto lo = static_cast<std::size_t>(std::max(0.0, (iv.start - kFade) * audio::kSampleRate));
    const auto hi = std::min(n, static_cast<std::size_t>((iv.end + kFade) * audio::kSampleRate) + 1);
    if (const Vowel* v = find_vowel(iv.label)) {
      std::vector<double> amp(static_cast<std::size_t>(n_harm) + 1);
      for (int k = 1; k <= n_harm; ++k) amp[k] = envelope(k * f0, *v, speaker);
      for (std::size_t i = lo; i < hi; ++i) {
        const double g = gate(static_cast<double>(i) / audio::kSampleRate, iv.start, iv.end);
        if (g == 0.0) continue;
        double s = 0.0;
        for (int k = 1; k <= n_harm; ++k) s += amp[k] * std::sin(k * phase[i]);
        x[i] += 0.15 * g * s;
      }
    } else {
      for (auto& w : white) w = gauss(rng);
      for (std::size_t i = std::max<std::size_t>(lo, 1); i < hi; ++i) {
        const double g = gate(static_cast<double>(i) / audio::kSampleRate, iv.start, iv.end);
        x[i] += 0.25 * g * (white[i] - white[i - 1]);
      }
    }
  }
  const double peak = audio::peak_abs(x);
  const double target = 0.4 + 0.3 * u(rng);
  for (auto& v : x) v *= target / peak;

  SynthClip clip;
  clip.id = id;
  clip.speaker = speaker.id;
  clip.wave = audio::Waveform(std::move(x));
  clip.transcript = phoneme::normalize_transcript(std::move(intervals), static_cast<double>(n) / audio::kSampleRate);
  return clip;
}

audio::Waveform synth_noise(std::size_t n_samples, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Three one-pole lowpasses of white noise give a roughly 1/f slope.
  std::array<double, 3> pole = {0.5, 0.9, 0.99};
  std::array<double, 3> state{};
  const double f_a = 50.0 + 350.0 * u(rng);
  const double f_b = 50.0 + 350.0 * u(rng);
  std::vector<double> x(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double w = gauss(rng);
    double s = 0.3 * w;
    for (int k = 0; k < 3; ++k) {
      state[k] = pole[k] * state[k] + (1.0 - pole[k]) * w;
      s += state[k] * (k + 1);
    }
    const double t = static_cast<double>(i) / audio::kSampleRate;
    s += 0.2 * std::sin(kTwoPi * f_a * t) + 0.1 * std::sin(kTwoPi * f_b * t * (1.0 + 0.01 * t));
    x[i] = s;
  }
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double rms = std::sqrt(ss / std::max<std::size_t>(n_samples, 1));
  if (rms > 0.0)
    for (auto& v : x) v *= 0.1 / rms;
  return audio::Waveform(std::move(x));
}

std::vector<SynthClip> synth_corpus(const SynthCorpusSpec& spec) {
  if (spec.clips_per_speaker < 1) throw invalid_input("synth_corpus: clips_per_speaker must be positive");
  const auto speakers = make_speakers(spec.speakers, spec.seed);
  std::vector<SynthClip> out;
  for (const auto& spk : speakers) {
    for (int i = 0; i < spec.clips_per_speaker; ++i) {
      const auto clip_seed = derive_seed(spec.seed, "synth.clip." + spk.id, static_cast<std::uint64_t>(i));
      out.push_back(synth_utterance(spk, clip_seed, spec.seconds, spk.id + "_" + std::to_string(i)));
    }
  }
  return out;
}

}  // namespace vpure::pipeline
