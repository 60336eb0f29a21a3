#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vpure::diffusion {

/// Discrete DDPM variance schedule, 1-based in t.
struct NoiseSchedule {
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;       // betas[t-1] = beta_t
  std::vector<double> alphas_bar;  // alphas_bar[t-1] = prod_{s<=t}(1 - beta_s)

  int t_max() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas.at(t - 1); }
  /// alpha_bar(0) == 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alphas_bar.at(t - 1); }
  /// Posterior variance beta_tilde_t; zero at t = 1.
  double posterior_variance(int t) const;
  std::string fingerprint() const;
};

NoiseSchedule build_schedule(int t_max, double beta_start, double beta_end);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
std::vector<double> forward_diffuse(std::span<const double> x0, int t,
                                    std::span<const double> noise,
                                    const NoiseSchedule& schedule);

/// epsilon-prediction network contract.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual std::vector<double> predict_noise(std::span<const double> x_t, int t) const = 0;
};

/// One ancestral DDPM step x_t -> x_{t-1}. The supplied noise is ignored at
/// t == 1.
std::vector<double> reverse_step(std::span<const double> x_t, int t,
                                 const NoisePredictor& model,
                                 const NoiseSchedule& schedule,
                                 std::span<const double> noise);

}  // namespace vpure::diffusion
