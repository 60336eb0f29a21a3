#include "vpure/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "vpure/common/error.hpp"
#include "vpure/common/parallel.hpp"

namespace vpure::eval {
namespace {

std::vector<std::vector<double>> embed_all(const std::vector<NamedWave>& waves,
                                           const protect::SpeakerEncoder& encoder,
                                           std::size_t workers) {
  std::vector<std::vector<double>> out(waves.size());
  parallel_for(waves.size(), workers, [&](std::size_t i) { out[i] = encoder.embed(waves[i].wave); });
  return out;
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

nlohmann::json summary_json(const DistributionSummary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"q25", s.q25},
          {"q75", s.q75},     {"min", s.min},   {"max", s.max}};
}

}  // namespace

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : per_sample) {
    samples.push_back({{"id", s.id}, {"score", s.score}, {"accept", s.accept}});
  }
  return {{"kind", "verification"}, {"condition", condition}, {"threshold", threshold},
          {"sva", sva},             {"samples", samples}};
}

VerificationReport VerificationReport::from_json(const nlohmann::json& j) {
  VerificationReport r;
  r.condition = j.value("condition", std::string());
  r.threshold = j.at("threshold");
  r.sva = j.at("sva");
  for (const auto& s : j.at("samples")) {
    r.per_sample.push_back({s.at("id"), s.at("score"), s.at("accept")});
  }
  return r;
}

std::string VerificationReport::to_csv() const {
  std::ostringstream os;
  os << "id,score,accept\n";
  for (const auto& s : per_sample) os << fmt::format("{},{:.6f},{}\n", s.id, s.score, s.accept ? 1 : 0);
  return os.str();
}

VerificationReport verify_scores(std::vector<std::string> ids, std::span<const double> scores,
                                 double threshold, const std::string& condition) {
  if (scores.empty()) throw invalid_input("sva: empty test set");
  if (ids.size() != scores.size()) throw invalid_input("sva: ids and scores differ in length");
  if (!(threshold >= -1.0 && threshold <= 1.0)) throw invalid_input("sva: threshold outside [-1, 1]");
  VerificationReport r;
  r.condition = condition;
  r.threshold = threshold;
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool ok = scores[i] >= threshold;
    accepted += ok;
    r.per_sample.push_back({std::move(ids[i]), scores[i], ok});
  }
  r.sva = static_cast<double>(accepted) / static_cast<double>(scores.size());
  return r;
}

VerificationReport sva(const std::vector<NamedWave>& tests, const audio::Waveform& enrollment,
                       const VerificationSystem& system, const std::string& condition,
                       std::size_t workers) {
  if (tests.empty()) throw invalid_input("sva: empty test set");
  if (!system.encoder) throw invalid_input("sva: verification system has no encoder");
  const auto ref = system.encoder->embed(enrollment);
  const auto emb = embed_all(tests, *system.encoder, workers);
  std::vector<std::string> ids;
  std::vector<double> scores;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    ids.push_back(tests[i].id);
    scores.push_back(protect::cosine(emb[i], ref));
  }
  return verify_scores(std::move(ids), scores, system.threshold, condition);
}

double false_accept_rate(std::span<const double> impostor, double threshold) {
  const auto n = std::count_if(impostor.begin(), impostor.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(n) / static_cast<double>(impostor.size());
}

double false_reject_rate(std::span<const double> genuine, double threshold) {
  const auto n = std::count_if(genuine.begin(), genuine.end(), [&](double s) { return s < threshold; });
  return static_cast<double>(n) / static_cast<double>(genuine.size());
}

EerResult eer_threshold(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) throw invalid_input("eer_threshold: empty score list");
  std::vector<double> s(genuine.begin(), genuine.end());
  s.insert(s.end(), impostor.begin(), impostor.end());
  for (double v : s)
    if (!std::isfinite(v)) throw invalid_input("eer_threshold: non-finite score");
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  const std::size_t m = s.size();

  // Interval k covers thresholds (s[k-1], s[k]]; interval m is (s[m-1], inf).
  // rep[k] is a threshold inside interval k, lo/hi its finite ends.
  const double above = std::nextafter(s[m - 1], std::numeric_limits<double>::infinity());
  auto lo = [&](std::size_t k) { return k == 0 ? s[0] : s[k - 1]; };
  auto hi = [&](std::size_t k) { return k == m ? above : s[k]; };
  auto rep = [&](std::size_t k) { return k == 0 ? s[0] : k == m ? above : 0.5 * (s[k - 1] + s[k]); };

  std::vector<double> far(m + 1), frr(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    far[k] = false_accept_rate(impostor, rep(k));
    frr[k] = false_reject_rate(genuine, rep(k));
  }

  for (std::size_t k = 0; k <= m; ++k) {
    if (far[k] != frr[k]) continue;
    std::size_t end = k;
    while (end + 1 <= m && far[end + 1] == frr[end + 1]) ++end;
    return {0.5 * (lo(k) + hi(end)), far[k]};
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    if (std::abs(far[k] - frr[k]) < std::abs(far[best] - frr[best])) best = k;
  }
  // FAR - FRR is non-increasing in the threshold, so the sign flips once.
  double eer = 0.5 * (far[best] + frr[best]);
  for (std::size_t k = 0; k < m; ++k) {
    const double d0 = far[k] - frr[k];
    const double d1 = far[k + 1] - frr[k + 1];
    if (d0 > 0.0 && d1 < 0.0) {
      const double t = d0 / (d0 - d1);
      eer = far[k] + t * (far[k + 1] - far[k]);
      break;
    }
  }
  return {rep(best), eer};
}

DistributionSummary summarize(std::span<const double> values) {
  if (values.empty()) throw invalid_input("summarize: no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  DistributionSummary s;
  s.count = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.median = quantile(v, 0.5);
  s.q25 = quantile(v, 0.25);
  s.q75 = quantile(v, 0.75);
  s.min = v.front();
  s.max = v.back();
  return s;
}

nlohmann::json SimilarityReport::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) pairs.push_back({{"id", ids[i]}, {"similarity", similarity[i]}});
  return {{"kind", "similarity"}, {"condition", condition}, {"summary", summary_json(summary)}, {"pairs", pairs}};
}

SimilarityReport SimilarityReport::from_json(const nlohmann::json& j) {
  SimilarityReport r;
  r.condition = j.value("condition", std::string());
  for (const auto& p : j.at("pairs")) {
    r.ids.push_back(p.at("id"));
    r.similarity.push_back(p.at("similarity"));
  }
  if (!r.similarity.empty()) r.summary = summarize(r.similarity);
  return r;
}

std::string SimilarityReport::to_csv() const {
  std::ostringstream os;
  os << "id,similarity\n";
  for (std::size_t i = 0; i < ids.size(); ++i) os << fmt::format("{},{:.6f}\n", ids[i], similarity[i]);
  return os.str();
}

SimilarityReport embedding_similarity_report(const std::vector<NamedWave>& clean,
                                             const std::vector<NamedWave>& processed,
                                             const protect::SpeakerEncoder& encoder,
                                             const std::string& condition, std::size_t workers) {
  std::map<std::string, std::size_t> clean_at;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (!clean_at.emplace(clean[i].id, i).second) {
      throw invalid_input("similarity report: duplicate clean id '" + clean[i].id + "'");
    }
  }
  std::map<std::string, std::size_t> proc_at;
  for (std::size_t i = 0; i < processed.size(); ++i) {
    if (!proc_at.emplace(processed[i].id, i).second) {
      throw invalid_input("similarity report: duplicate processed id '" + processed[i].id + "'");
    }
    if (!clean_at.count(processed[i].id)) {
      throw invalid_input("similarity report: '" + processed[i].id + "' has no clean counterpart");
    }
  }
  for (const auto& [id, i] : clean_at) {
    if (!proc_at.count(id)) throw invalid_input("similarity report: '" + id + "' has no processed counterpart");
  }
  if (clean.empty()) throw invalid_input("similarity report: no pairs");

  const auto ec = embed_all(clean, encoder, workers);
  const auto ep = embed_all(processed, encoder, workers);
  SimilarityReport r;
  r.condition = condition;
  for (const auto& [id, i] : clean_at) {
    r.ids.push_back(id);
    r.similarity.push_back(protect::cosine(ec[i], ep[proc_at.at(id)]));
  }
  r.summary = summarize(r.similarity);
  return r;
}

}  // namespace vpure::eval
