#include "vpure/diffusion/schedule.hpp"

#include <cmath>
#include <sstream>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"

namespace vpure::diffusion {

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

std::string NoiseSchedule::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << "ddpm-linear;t_max=" << t_max() << ";beta_start=" << beta_start
     << ";beta_end=" << beta_end;
  return sha256_hex(os.str()).substr(0, 16);
}

NoiseSchedule build_schedule(int t_max, double beta_start, double beta_end) {
  if (t_max < 1) throw invalid_input("build_schedule: T_max must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw invalid_input("build_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(t_max);
  s.alphas_bar.resize(t_max);
  double prod = 1.0;
  for (int t = 1; t <= t_max; ++t) {
    const double frac = t_max == 1 ? 0.0 : static_cast<double>(t - 1) / (t_max - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    prod *= 1.0 - beta;
    s.betas[t - 1] = beta;
    s.alphas_bar[t - 1] = prod;
  }
  return s;
}

std::vector<double> forward_diffuse(std::span<const double> x0, int t,
                                    std::span<const double> noise,
                                    const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.t_max()) {
    throw invalid_input("forward_diffuse: t out of range");
  }
  if (noise.size() != x0.size()) throw invalid_input("forward_diffuse: shape mismatch");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

std::vector<double> reverse_step(std::span<const double> x_t, int t,
                                 const NoisePredictor& model,
                                 const NoiseSchedule& schedule,
                                 std::span<const double> noise) {
  if (t < 1 || t > schedule.t_max()) throw invalid_input("reverse_step: t out of range");
  const bool stochastic = t > 1;
  if (stochastic && noise.size() != x_t.size()) {
    throw invalid_input("reverse_step: noise shape mismatch");
  }
  const auto eps = model.predict_noise(x_t, t);
  if (eps.size() != x_t.size()) throw invalid_input("reverse_step: model output shape mismatch");
  const double beta = schedule.beta(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
  const double eps_coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double sigma = stochastic ? std::sqrt(schedule.posterior_variance(t)) : 0.0;
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps[i]);
    if (stochastic) out[i] += sigma * noise[i];
  }
  return out;
}

}  // namespace vpure::diffusion
