#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "helpers.hpp"
#include "vpure/common/digest.hpp"
#include "vpure/phoneme/alignment.hpp"
#include "vpure/phoneme/dictionary.hpp"
#include "vpure/pipeline/synth.hpp"

using namespace vpure;
using namespace vpure::phoneme;
using testutil::error_kind;

namespace {

std::vector<AlignedUtterance> synthetic_corpus(int n, std::uint64_t seed) {
  const auto speakers = pipeline::make_speakers(2, seed);
  std::vector<AlignedUtterance> out;
  for (int i = 0; i < n; ++i) {
    const double seconds = 0.6 + 0.1 * (i % 5);
    auto clip = pipeline::synth_utterance(speakers[i % 2], derive_seed(seed, "u", i), seconds);
    out.push_back({clip.wave, clip.transcript});
  }
  return out;
}

// Label of the interval containing centre time t; the last interval is closed.
std::string label_at(const AlignedTranscript& tr, double t) {
  for (std::size_t k = 0; k < tr.intervals.size(); ++k) {
    const auto& iv = tr.intervals[k];
    const bool last = k + 1 == tr.intervals.size();
    if (t >= iv.start - 1e-12 && (t < iv.end - 1e-12 || (last && t <= iv.end + 1e-12))) {
      return iv.label;
    }
  }
  return kSilence;
}

}  // namespace

TEST_CASE("alignment JSON forms") {
  const auto a = parse_alignment_json(R"([{"label":"AH","start":0.0,"end":0.5}])");
  REQUIRE(a.intervals.size() == 1);
  CHECK(a.intervals[0].label == "AH");
  CHECK(a.audio_duration == 0.5);

  const auto b = parse_alignment_json(
      R"({"duration":1.0,"intervals":[{"label":"AA","start":0.0,"end":0.3},{"label":"B","start":0.4,"end":0.8}]})");
  REQUIRE(b.intervals.size() == 4);
  CHECK(b.intervals[1].label == kSilence);
  CHECK(b.intervals[1].start == 0.3);
  CHECK(b.intervals[1].end == 0.4);
  CHECK(b.intervals[3].label == kSilence);
  CHECK(b.intervals[3].end == 1.0);

  const auto c = parse_alignment_json(R"({"label":["B","AA"],"start":[0.5,0.0],"end":[0.7,0.5]})");
  REQUIRE(c.intervals.size() == 2);
  CHECK(c.intervals[0].label == "AA");
  CHECK(c.intervals[1].label == "B");

  CHECK(error_kind([] {
          parse_alignment_json(R"([{"label":"A","start":0.0,"end":0.5},{"label":"B","start":0.4,"end":0.8}])");
        }) == ErrorKind::kFormat);
  CHECK(error_kind([] { parse_alignment_json(R"([{"label":"A","start":-0.1,"end":0.5}])"); }) ==
        ErrorKind::kFormat);
  CHECK(error_kind([] { parse_alignment_json("{not json"); }) == ErrorKind::kFormat);
}

TEST_CASE("alignment JSON round trip") {
  const auto a = parse_alignment_json(
      R"({"duration":0.9,"intervals":[{"label":"AA","start":0.1,"end":0.3}]})");
  const auto b = parse_alignment_json(to_json_text(a));
  REQUIRE(a.intervals.size() == b.intervals.size());
  for (std::size_t i = 0; i < a.intervals.size(); ++i) {
    CHECK(a.intervals[i].label == b.intervals[i].label);
    CHECK(a.intervals[i].start == b.intervals[i].start);
    CHECK(a.intervals[i].end == b.intervals[i].end);
  }
}

TEST_CASE("TextGrid phones tier") {
  const std::string tg = R"(File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 1.0
tiers? <exists>
size = 2
item []:
    item [1]:
        class = "IntervalTier"
        name = "words"
        xmin = 0
        xmax = 1.0
        intervals: size = 1
        intervals [1]:
            xmin = 0
            xmax = 1.0
            text = "hello"
    item [2]:
        class = "IntervalTier"
        name = "phones"
        xmin = 0
        xmax = 1.0
        intervals: size = 3
        intervals [1]:
            xmin = 0
            xmax = 0.2
            text = ""
        intervals [2]:
            xmin = 0.2
            xmax = 0.6
            text = "HH"
        intervals [3]:
            xmin = 0.6
            xmax = 0.9
            text = "spn"
)";
  const auto dir = testutil::temp_dir("textgrid");
  write_text_file(dir / "a.TextGrid", tg);
  const auto t = parse_alignment(dir / "a.TextGrid");
  CHECK(t.audio_duration == 1.0);
  REQUIRE(t.intervals.size() == 4);
  CHECK(t.intervals[0].label == kSilence);
  CHECK(t.intervals[1].label == "HH");
  CHECK(t.intervals[2].label == kUnknown);
  CHECK(t.intervals[3].label == kSilence);
}

TEST_CASE("frames_for_interval examples") {
  const audio::SpectrogramConfig c;
  const auto r = frames_for_interval({"A", 0.0, 1.0}, c, 126);
  CHECK(r.begin == 0);
  // Centres i*128/16000 < 1.0 are i = 0..124; frame 125 sits exactly at 1.0.
  int count = 0;
  for (int i = 0; i < 126; ++i) count += i * 128.0 / 16000.0 < 1.0;
  CHECK(r.end == count);

  const auto empty = frames_for_interval({"A", 0.0801, 0.0805}, c, 126);
  CHECK(empty.size() == 0);

  const auto a = frames_for_interval({"A", 0.0, 0.33}, c, 126);
  const auto b = frames_for_interval({"B", 0.33, 1.0}, c, 126);
  CHECK(a.end == b.begin);
}

TEST_CASE("frame labels partition every frame") {
  const audio::SpectrogramConfig c;
  for (const auto& utt : synthetic_corpus(6, 3)) {
    const int n = c.frame_count(utt.wave.size());
    std::vector<int> hits(n, 0);
    for (const auto& iv : utt.transcript.intervals) {
      const auto r = frames_for_interval(iv, c, n);
      for (int i = r.begin; i < r.end; ++i) ++hits[i];
    }
    // Only the frame centred exactly on the end of the audio may be left over.
    for (int i = 0; i < n; ++i) {
      if (i * 128.0 / 16000.0 < utt.transcript.audio_duration - 1e-9) CHECK(hits[i] == 1);
      else CHECK(hits[i] <= 1);
    }
    const auto labels = frame_labels(utt.transcript, c, n);
    for (int i = 0; i < n; ++i) CHECK(labels[i] == label_at(utt.transcript, i * 128.0 / 16000.0));
  }
}

TEST_CASE("build_dictionary equals a brute-force frame average") {
  const auto corpus = synthetic_corpus(10, 1);
  const auto dict = build_dictionary(corpus);

  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, std::size_t> counts;
  std::vector<double> total(256, 0.0);
  std::size_t frames = 0;
  for (const auto& utt : corpus) {
    const auto spec = audio::stft(utt.wave);
    for (int f = 0; f < spec.n_frames; ++f) {
      const auto label = label_at(utt.transcript, f * 128.0 / 16000.0);
      auto& s = sums[label];
      s.resize(256, 0.0);
      for (int b = 0; b < 256; ++b) {
        s[b] += std::abs(spec.at(b, f));
        total[b] += std::abs(spec.at(b, f));
      }
      ++counts[label];
      ++frames;
    }
  }
  CHECK(dict.entries.size() == sums.size());
  for (const auto& [label, s] : sums) {
    REQUIRE(dict.entries.count(label) == 1);
    CHECK(dict.frame_counts.at(label) == counts[label]);
    for (int b = 0; b < 256; ++b) {
      CHECK(std::abs(dict.entries.at(label)[b] - s[b] / counts[label]) <= 1e-6);
      CHECK(dict.entries.at(label)[b] >= 0.0);
    }
  }
  for (int b = 0; b < 256; ++b) CHECK(std::abs(dict.global_average[b] - total[b] / frames) <= 1e-6);
}

TEST_CASE("dictionary mean properties") {
  const auto corpus = synthetic_corpus(5, 2);
  const auto base = build_dictionary(corpus);

  std::vector<AlignedUtterance> doubled = corpus;
  doubled.insert(doubled.end(), corpus.begin(), corpus.end());
  const auto d2 = build_dictionary(doubled);
  for (const auto& [label, e] : base.entries) {
    for (int b = 0; b < 256; ++b) CHECK(d2.entries.at(label)[b] == doctest::Approx(e[b]).epsilon(1e-12));
  }

  auto shuffled = corpus;
  std::shuffle(shuffled.begin(), shuffled.end(), Rng(4));
  const auto ds = build_dictionary(shuffled, {}, 3);
  for (const auto& [label, e] : base.entries) {
    for (int b = 0; b < 256; ++b) CHECK(std::abs(ds.entries.at(label)[b] - e[b]) <= 1e-12);
  }

  // A phoneme seen once at x and once at 3x averages to 2|X|.
  const auto x = testutil::white_noise(8000, 6);
  audio::Waveform x3 = x;
  for (auto& v : x3.samples) v *= 3.0;
  AlignedTranscript tr{{{"A", 0.0, 0.5}}, 0.5};
  const std::vector<AlignedUtterance> pair{{x, tr}, {x3, tr}};
  const auto dp = build_dictionary(pair);
  const auto spec = audio::stft(x);
  std::vector<double> mean(256, 0.0);
  for (int f = 0; f < spec.n_frames; ++f)
    for (int b = 0; b < 256; ++b) mean[b] += std::abs(spec.at(b, f)) / spec.n_frames;
  for (int b = 0; b < 256; ++b) CHECK(dp.entries.at("A")[b] == doctest::Approx(2.0 * mean[b]).epsilon(1e-9));

  CHECK(error_kind([] { build_dictionary(std::span<const AlignedUtterance>{}); }) ==
        ErrorKind::kInvalidInput);
  const std::vector<AlignedUtterance> bad{{x, AlignedTranscript{{{"A", 0.0, 0.9}}, 0.9}}};
  CHECK(error_kind([&] { build_dictionary(bad); }) == ErrorKind::kData);
}

TEST_CASE("assemble_representation semantics") {
  PhonemeDictionary dict;
  dict.entries["A"] = std::vector<double>(256, 1.0);
  dict.entries["B"] = std::vector<double>(256, 2.0);
  dict.entries[kSilence] = std::vector<double>(256, 0.5);
  dict.global_average = std::vector<double>(256, 7.0);

  const AlignedTranscript single{{{"A", 0.0, 1.0}}, 1.0};
  const auto one = assemble_representation(single, 126, dict);
  CHECK(one.n_bins == 256);
  CHECK(one.n_frames == 126);
  for (double v : one.data) CHECK(v == 1.0);

  const AlignedTranscript ab{{{"A", 0.0, 0.4}, {"B", 0.4, 1.0}}, 1.0};
  const auto rep = assemble_representation(ab, 126, dict);
  const int k = frames_for_interval({"B", 0.4, 1.0}, {}, 126).begin;
  CHECK(k == 50);
  for (int f = 0; f < 126; ++f) CHECK(rep.at(17, f) == (f < k ? 1.0 : 2.0));

  const AlignedTranscript unk{{{"ZZ", 0.0, 0.5}, {kUnknown, 0.5, 1.0}}, 1.0};
  const auto fb = assemble_representation(unk, 126, dict);
  for (double v : fb.data) CHECK(v == 7.0);
  CHECK(error_kind([&] { assemble_representation(unk, 126, dict, false); }) == ErrorKind::kLookup);

  const auto g = global_representation(10, dict);
  for (double v : g.data) CHECK(v == 7.0);
}

TEST_CASE("representation shape matches the magnitude spectrogram and is piecewise constant") {
  const auto corpus = synthetic_corpus(4, 5);
  const auto dict = build_dictionary(corpus);
  for (const auto& utt : corpus) {
    const auto spec = audio::stft(utt.wave);
    const auto rep = assemble_representation(utt.transcript, spec.n_frames, dict);
    CHECK(rep.n_bins == spec.n_bins);
    CHECK(rep.n_frames == spec.n_frames);
    for (const auto& iv : utt.transcript.intervals) {
      const auto r = frames_for_interval(iv, {}, spec.n_frames);
      for (int f = r.begin + 1; f < r.end; ++f)
        for (int b = 0; b < 256; b += 15) CHECK(rep.at(b, f) == rep.at(b, r.begin));
    }
  }
}

TEST_CASE("dictionary persistence") {
  const auto dict = build_dictionary(synthetic_corpus(3, 8));
  const auto dir = testutil::temp_dir("dict");
  save_dictionary(dir / "d.json", dict);
  const auto back = load_dictionary(dir / "d.json");
  CHECK(back.fingerprint() == dict.fingerprint());
  CHECK(back.entries == dict.entries);

  auto doc = nlohmann::json::parse(read_text_file(dir / "d.json"));
  doc["config"]["window_size"] = 512;
  write_text_file(dir / "bad.json", doc.dump());
  CHECK(error_kind([&] { load_dictionary(dir / "bad.json"); }) == ErrorKind::kCheckpointMismatch);
}
