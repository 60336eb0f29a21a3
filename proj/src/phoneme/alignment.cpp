#include "vpure/phoneme/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"

namespace vpure::phoneme {
namespace {

using nlohmann::json;

constexpr double kTimeTol = 1e-9;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string unquote(std::string_view s) {
  s = trim(s);
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') return std::string(s);
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    out.push_back(s[i]);
    if (s[i] == '"' && i + 2 < s.size() && s[i + 1] == '"') ++i;
  }
  return out;
}

std::string canonical_label(const std::string& raw) {
  if (raw.empty() || raw == "sil" || raw == "sp" || raw == "SIL" || raw == "<eps>") return kSilence;
  if (raw == "spn" || raw == "UNK") return kUnknown;
  return raw;
}

}  // namespace

AlignedTranscript normalize_transcript(std::vector<PhonemeInterval> intervals,
                                       double duration) {
  for (const auto& iv : intervals) {
    if (!(iv.start >= 0.0) || !(iv.end >= 0.0)) {
      throw format_error("alignment: negative time in interval '" + iv.label + "'");
    }
    if (!(iv.start < iv.end)) {
      throw format_error("alignment: interval '" + iv.label + "' has start >= end");
    }
  }
  std::stable_sort(intervals.begin(), intervals.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  double last_end = 0.0;
  for (std::size_t i = 0; i + 1 < intervals.size(); ++i) {
    if (intervals[i + 1].start < intervals[i].end - kTimeTol) {
      throw format_error("alignment: intervals '" + intervals[i].label + "' and '" +
                         intervals[i + 1].label + "' overlap");
    }
  }
  if (!intervals.empty()) last_end = intervals.back().end;
  if (duration < 0.0) duration = last_end;
  if (last_end > duration + 1e-6) {
    throw format_error("alignment: interval ends after the audio duration");
  }
  AlignedTranscript out;
  out.audio_duration = duration;
  double cursor = 0.0;
  for (auto& iv : intervals) {
    if (iv.start > cursor + kTimeTol) out.intervals.push_back({kSilence, cursor, iv.start});
    cursor = iv.end;
    out.intervals.push_back(std::move(iv));
  }
  if (duration > cursor + kTimeTol) out.intervals.push_back({kSilence, cursor, duration});
  return out;
}

AlignedTranscript parse_alignment_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw format_error(std::string("alignment JSON: ") + e.what());
  }
  std::vector<PhonemeInterval> intervals;
  double duration = -1.0;
  try {
    const json* list = &doc;
    if (doc.is_object()) {
      duration = doc.value("duration", -1.0);
      if (doc.contains("intervals")) {
        list = &doc.at("intervals");
      } else if (doc.contains("label")) {
        const auto labels = doc.at("label").get<std::vector<std::string>>();
        const auto starts = doc.at("start").get<std::vector<double>>();
        const auto ends = doc.at("end").get<std::vector<double>>();
        if (labels.size() != starts.size() || labels.size() != ends.size()) {
          throw format_error("alignment JSON: label/start/end arrays differ in length");
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
          intervals.push_back({canonical_label(labels[i]), starts[i], ends[i]});
        }
        list = nullptr;
      } else {
        throw format_error("alignment JSON: no intervals");
      }
    }
    if (list) {
      if (!list->is_array()) throw format_error("alignment JSON: intervals must be an array");
      for (const auto& item : *list) {
        intervals.push_back({canonical_label(item.at("label").get<std::string>()),
                             item.at("start").get<double>(), item.at("end").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("alignment JSON: ") + e.what());
  }
  return normalize_transcript(std::move(intervals), duration);
}

AlignedTranscript parse_textgrid(std::string_view text) {
  struct Tier {
    std::string cls, name;
    std::vector<PhonemeInterval> intervals;
  };
  std::vector<Tier> tiers;
  double file_xmax = -1.0;
  bool in_interval = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  auto value_of = [](std::string_view line) { return trim(line.substr(line.find('=') + 1)); };
  try {
    while (std::getline(in, raw)) {
      const std::string_view line = trim(raw);
      if (line.starts_with("item [") && !line.starts_with("item []")) {
        tiers.emplace_back();
        in_interval = false;
      } else if (line.starts_with("class =") && !tiers.empty()) {
        tiers.back().cls = unquote(value_of(line));
      } else if (line.starts_with("name =") && !tiers.empty()) {
        tiers.back().name = unquote(value_of(line));
      } else if (line.starts_with("intervals [") && !tiers.empty()) {
        tiers.back().intervals.emplace_back();
        in_interval = true;
      } else if (line.starts_with("xmin =")) {
        if (in_interval) tiers.back().intervals.back().start = std::stod(std::string(value_of(line)));
      } else if (line.starts_with("xmax =")) {
        const double v = std::stod(std::string(value_of(line)));
        if (in_interval) {
          tiers.back().intervals.back().end = v;
        } else if (tiers.empty()) {
          file_xmax = v;
        }
      } else if (line.starts_with("text =") && in_interval) {
        tiers.back().intervals.back().label = unquote(value_of(line));
      }
    }
  } catch (const std::exception& e) {
    throw format_error(std::string("TextGrid: malformed number: ") + e.what());
  }
  const Tier* chosen = nullptr;
  for (const auto& t : tiers) {
    if (t.cls != "IntervalTier") continue;
    if (t.name == "phones") {
      chosen = &t;
      break;
    }
    if (!chosen) chosen = &t;
  }
  if (!chosen) throw format_error("TextGrid: no interval tier");
  std::vector<PhonemeInterval> intervals;
  for (const auto& iv : chosen->intervals) {
    intervals.push_back({canonical_label(iv.label), iv.start, iv.end});
  }
  return normalize_transcript(std::move(intervals), file_xmax);
}

AlignedTranscript parse_alignment(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  try {
    if (ext == ".textgrid") return parse_textgrid(text);
    return parse_alignment_json(text);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string to_json_text(const AlignedTranscript& transcript) {
  json items = json::array();
  for (const auto& iv : transcript.intervals) {
    items.push_back({{"label", iv.label}, {"start", iv.start}, {"end", iv.end}});
  }
  return json{{"duration", transcript.audio_duration}, {"intervals", items}}.dump(1);
}

FrameRange frames_for_interval(const PhonemeInterval& interval,
                               const audio::SpectrogramConfig& config, int n_frames) {
  const double frames_per_second = static_cast<double>(audio::kSampleRate) / config.hop_length;
  auto first_at_or_after = [&](double seconds) {
    const double pos = seconds * frames_per_second;
    return static_cast<int>(std::ceil(pos - 1e-9));
  };
  FrameRange r{first_at_or_after(interval.start), first_at_or_after(interval.end)};
  r.begin = std::clamp(r.begin, 0, n_frames);
  r.end = std::clamp(r.end, r.begin, n_frames);
  return r;
}

std::vector<std::string> frame_labels(const AlignedTranscript& transcript,
                                      const audio::SpectrogramConfig& config, int n_frames) {
  std::vector<std::string> labels(n_frames, kSilence);
  for (const auto& iv : transcript.intervals) {
    const auto r = frames_for_interval(iv, config, n_frames);
    for (int i = r.begin; i < r.end; ++i) labels[i] = iv.label;
  }
  if (!transcript.intervals.empty()) {
    const auto& last = transcript.intervals.back();
    const auto r = frames_for_interval(last, config, n_frames);
    const double hop_seconds = static_cast<double>(config.hop_length) / audio::kSampleRate;
    for (int i = r.end; i < n_frames && i * hop_seconds <= last.end + 1e-9; ++i) {
      labels[i] = last.label;
    }
  }
  return labels;
}

}  // namespace vpure::phoneme
