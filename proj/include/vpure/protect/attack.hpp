#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "vpure/audio/waveform.hpp"
#include "vpure/protect/encoder.hpp"

namespace vpure::protect {

enum class AttackMode { kUntargetedAway, kTargetedToward };

inline constexpr int kAdaptiveIterations = 150;

struct ProtectionConfig {
  double epsilon = 0.008;
  int n_iters = 100;
  double step_size = 0.001;
  AttackMode mode = AttackMode::kUntargetedAway;
  std::optional<std::vector<double>> target_embedding;
  bool random_start = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ProtectionConfig from_json(const nlohmann::json& j);
};

/// Clamps x_adv into the L-inf ball around x and into [-1, 1]. The result
/// satisfies |x_adv[i] - x[i]| <= eps as evaluated in double arithmetic.
void project_linf(const std::vector<double>& x, std::vector<double>& x_adv, double eps);

/// Rounds x_adv to the 16-bit PCM grid, stepping one code toward x where
/// plain rounding would leave the L-inf ball. x must itself lie on the grid.
audio::Waveform quantize_pcm16_within_budget(const audio::Waveform& x,
                                             const audio::Waveform& x_adv, double eps);

bool within_budget(const audio::Waveform& x, const audio::Waveform& x_adv, double eps);

audio::Waveform embedding_attack(const audio::Waveform& x, const SpeakerEncoder& encoder,
                                 const ProtectionConfig& config, std::uint64_t seed);

/// Stochastic purification draw. The seed selects the draw.
using PurifyFn = std::function<audio::Waveform(const audio::Waveform&, std::uint64_t)>;

audio::Waveform bpda_eot_protect(const audio::Waveform& x, const SpeakerEncoder& encoder,
                                 const PurifyFn& purify_fn, int eot_size,
                                 const ProtectionConfig& config, std::uint64_t seed,
                                 std::size_t workers = 1);

struct ProtectionRecord {
  ProtectionConfig config;
  std::uint64_t seed = 0;
  int iterations = 0;
  int eot_size = 0;  // 0 for the non-adaptive attack
  /// 1 - cosine(embed(x'), embed(x)).
  double displacement = 0.0;
  bool budget_ok = false;

  nlohmann::json to_json() const;
};

}  // namespace vpure::protect
