#include "vpure/phoneme/dictionary.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"
#include "vpure/common/parallel.hpp"

namespace vpure::phoneme {
namespace {

using nlohmann::json;

struct Accumulator {
  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, std::size_t> counts;
};

Accumulator accumulate(const AlignedUtterance& utt, const audio::SpectrogramConfig& config) {
  const auto spec = audio::stft(utt.wave, config);
  const double hop_seconds = static_cast<double>(config.hop_length) / audio::kSampleRate;
  if (std::abs(utt.transcript.audio_duration - utt.wave.duration_seconds()) > hop_seconds + 1e-9) {
    throw Error(ErrorKind::kData, "build_dictionary: alignment duration " +
                                      std::to_string(utt.transcript.audio_duration) +
                                      " s disagrees with audio length " +
                                      std::to_string(utt.wave.duration_seconds()) + " s");
  }
  const auto labels = frame_labels(utt.transcript, config, spec.n_frames);
  Accumulator acc;
  for (int f = 0; f < spec.n_frames; ++f) {
    auto& sum = acc.sums[labels[f]];
    if (sum.empty()) sum.assign(spec.n_bins, 0.0);
    for (int b = 0; b < spec.n_bins; ++b) sum[b] += std::abs(spec.at(b, f));
    ++acc.counts[labels[f]];
  }
  return acc;
}

}  // namespace

std::vector<std::string> PhonemeDictionary::inventory() const {
  std::vector<std::string> out;
  for (const auto& [label, _] : entries) out.push_back(label);
  return out;
}

const std::vector<double>& PhonemeDictionary::lookup(const std::string& label,
                                                     bool fallback) const {
  if (label != kUnknown) {
    auto it = entries.find(label);
    if (it != entries.end()) return it->second;
  }
  if (!fallback) throw Error(ErrorKind::kLookup, "phoneme '" + label + "' not in dictionary");
  return global_average;
}

std::string PhonemeDictionary::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << config.fingerprint();
  for (const auto& [label, entry] : entries) {
    os << ';' << label << ':' << frame_counts.at(label);
    for (double v : entry) os << ',' << v;
  }
  return sha256_hex(os.str()).substr(0, 16);
}

PhonemeDictionary build_dictionary(std::span<const AlignedUtterance> corpus,
                                   const audio::SpectrogramConfig& config,
                                   std::size_t workers) {
  if (corpus.empty()) throw invalid_input("build_dictionary: empty corpus");
  config.validate();
  std::vector<Accumulator> partial(corpus.size());
  parallel_for(corpus.size(), workers,
               [&](std::size_t i) { partial[i] = accumulate(corpus[i], config); });

  // Reduce in corpus order so the result is independent of scheduling.
  const auto n_bins = static_cast<std::size_t>(config.n_bins());
  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, std::size_t> counts;
  std::vector<double> total(n_bins, 0.0);
  std::size_t total_frames = 0;
  for (const auto& acc : partial) {
    for (const auto& [label, sum] : acc.sums) {
      auto& dst = sums[label];
      if (dst.empty()) dst.assign(n_bins, 0.0);
      for (std::size_t b = 0; b < n_bins; ++b) {
        dst[b] += sum[b];
        total[b] += sum[b];
      }
      counts[label] += acc.counts.at(label);
      total_frames += acc.counts.at(label);
    }
  }
  PhonemeDictionary dict;
  dict.config = config;
  dict.global_average.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    dict.global_average[b] = total[b] / static_cast<double>(total_frames);
  }
  for (auto& [label, sum] : sums) {
    if (label == kUnknown) continue;
    const double n = static_cast<double>(counts[label]);
    for (auto& v : sum) v /= n;
    dict.entries[label] = std::move(sum);
    dict.frame_counts[label] = counts[label];
  }
  return dict;
}

PhonemeRepresentation assemble_representation(const AlignedTranscript& transcript,
                                              int n_frames, const PhonemeDictionary& dict,
                                              bool unknown_fallback) {
  const auto labels = frame_labels(transcript, dict.config, n_frames);
  PhonemeRepresentation rep{dict.config.n_bins(), n_frames, {}};
  rep.data.resize(static_cast<std::size_t>(rep.n_bins) * n_frames);
  for (int f = 0; f < n_frames; ++f) {
    const auto& column = dict.lookup(labels[f], unknown_fallback);
    for (int b = 0; b < rep.n_bins; ++b) {
      rep.data[static_cast<std::size_t>(b) * n_frames + f] = column[b];
    }
  }
  return rep;
}

PhonemeRepresentation global_representation(int n_frames, const PhonemeDictionary& dict) {
  PhonemeRepresentation rep{dict.config.n_bins(), n_frames, {}};
  rep.data.resize(static_cast<std::size_t>(rep.n_bins) * n_frames);
  for (int b = 0; b < rep.n_bins; ++b)
    for (int f = 0; f < n_frames; ++f)
      rep.data[static_cast<std::size_t>(b) * n_frames + f] = dict.global_average[b];
  return rep;
}

void save_dictionary(const std::filesystem::path& path, const PhonemeDictionary& dict) {
  json entries = json::array();
  json counts = json::array();
  for (const auto& [label, entry] : dict.entries) {
    entries.push_back(entry);
    counts.push_back(dict.frame_counts.at(label));
  }
  const json doc = {
      {"format", "vpure.phoneme_dictionary"},
      {"version", 1},
      {"config",
       {{"window_size", dict.config.window_size},
        {"hop_length", dict.config.hop_length},
        {"window", "sqrt_hann"}}},
      {"config_fingerprint", dict.config.fingerprint()},
      {"inventory", dict.inventory()},
      {"entries", entries},
      {"frame_counts", counts},
      {"global_average", dict.global_average},
  };
  write_text_file(path, doc.dump());
}

PhonemeDictionary load_dictionary(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw format_error(path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "vpure.phoneme_dictionary" || doc.value("version", 0) != 1) {
    throw format_error(path.string() + ": not a phoneme dictionary");
  }
  PhonemeDictionary dict;
  dict.config.window_size = doc.at("config").at("window_size");
  dict.config.hop_length = doc.at("config").at("hop_length");
  if (dict.config.fingerprint() != doc.at("config_fingerprint").get<std::string>()) {
    throw Error(ErrorKind::kCheckpointMismatch, path.string() + ": config fingerprint mismatch");
  }
  const auto inventory = doc.at("inventory").get<std::vector<std::string>>();
  const auto& entries = doc.at("entries");
  const auto& counts = doc.at("frame_counts");
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    dict.entries[inventory[i]] = entries.at(i).get<std::vector<double>>();
    dict.frame_counts[inventory[i]] = counts.at(i).get<std::size_t>();
  }
  dict.global_average = doc.at("global_average").get<std::vector<double>>();
  return dict;
}

}  // namespace vpure::phoneme
