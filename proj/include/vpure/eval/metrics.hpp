#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vpure/audio/waveform.hpp"
#include "vpure/protect/encoder.hpp"

namespace vpure::eval {

struct NamedWave {
  std::string id;
  audio::Waveform wave;
};

struct VerificationSystem {
  const protect::SpeakerEncoder* encoder = nullptr;
  /// Accept when cosine >= threshold.
  double threshold = 0.25;
};

struct VerificationSample {
  std::string id;
  double score = 0.0;
  bool accept = false;
};

struct VerificationReport {
  std::string condition;
  double threshold = 0.0;
  double sva = 0.0;
  std::vector<VerificationSample> per_sample;

  nlohmann::json to_json() const;
  static VerificationReport from_json(const nlohmann::json& j);
  std::string to_csv() const;
};

/// Thresholds precomputed scores. Used by sva() and directly by tests.
VerificationReport verify_scores(std::vector<std::string> ids, std::span<const double> scores,
                                 double threshold, const std::string& condition = {});

VerificationReport sva(const std::vector<NamedWave>& tests, const audio::Waveform& enrollment,
                       const VerificationSystem& system, const std::string& condition = {},
                       std::size_t workers = 1);

struct EerResult {
  double threshold = 0.0;
  double eer = 0.0;
};

/// FAR(t) = share of impostor scores >= t, FRR(t) = share of genuine < t.
/// Rates are constant between consecutive distinct scores. When some of
/// those intervals have FAR == FRR the threshold is the middle of the lowest
/// such run; otherwise eer is interpolated between the two intervals around
/// the crossing and the threshold is the middle of the interval with the
/// smaller |FAR - FRR| (lower one on ties).
EerResult eer_threshold(std::span<const double> genuine, std::span<const double> impostor);

double false_accept_rate(std::span<const double> impostor, double threshold);
double false_reject_rate(std::span<const double> genuine, double threshold);

struct DistributionSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Linear-interpolated quantiles.
DistributionSummary summarize(std::span<const double> values);

struct SimilarityReport {
  std::string condition;
  std::vector<std::string> ids;
  std::vector<double> similarity;
  DistributionSummary summary;

  nlohmann::json to_json() const;
  static SimilarityReport from_json(const nlohmann::json& j);
  std::string to_csv() const;
};

/// Pairs clean and processed clips by id; any id present on only one side,
/// or repeated, is an invalid-input error.
SimilarityReport embedding_similarity_report(const std::vector<NamedWave>& clean,
                                             const std::vector<NamedWave>& processed,
                                             const protect::SpeakerEncoder& encoder,
                                             const std::string& condition = {},
                                             std::size_t workers = 1);

/// Hook for an external quality model. Nothing in this library implements it.
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(const audio::Waveform& wave) const = 0;
};

}  // namespace vpure::eval
