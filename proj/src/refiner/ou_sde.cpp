#include "vpure/refiner/ou_sde.hpp"

#include <cmath>

#include "vpure/common/error.hpp"

namespace vpure::refiner {

void OUSDEParams::validate() const {
  if (!(sigma_min > 0.0) || !(sigma_min < sigma_max)) {
    throw invalid_input("OU-SDE: need 0 < sigma_min < sigma_max");
  }
  if (!(gamma > 0.0)) throw invalid_input("OU-SDE: gamma must be positive");
  if (!(tau_eps > 0.0) || !(tau_eps < t_max)) {
    throw invalid_input("OU-SDE: need 0 < tau_eps < T");
  }
  if (!(state_scale > 0.0)) throw invalid_input("OU-SDE: state_scale must be positive");
}

double OUSDEParams::diffusion(double tau) const {
  const double log_ratio = std::log(sigma_max / sigma_min);
  return sigma_min * std::pow(sigma_max / sigma_min, tau) * std::sqrt(2.0 * log_ratio);
}

nlohmann::json OUSDEParams::to_json() const {
  return {{"gamma", gamma}, {"sigma_min", sigma_min}, {"sigma_max", sigma_max},
          {"t_max", t_max}, {"tau_eps", tau_eps}, {"state_scale", state_scale}};
}

OUSDEParams OUSDEParams::from_json(const nlohmann::json& j) {
  OUSDEParams p;
  p.gamma = j.value("gamma", p.gamma);
  p.sigma_min = j.value("sigma_min", p.sigma_min);
  p.sigma_max = j.value("sigma_max", p.sigma_max);
  p.t_max = j.value("t_max", p.t_max);
  p.tau_eps = j.value("tau_eps", p.tau_eps);
  p.state_scale = j.value("state_scale", p.state_scale);
  return p;
}

std::vector<Complex> ou_mean(std::span<const Complex> m0, std::span<const Complex> y,
                             double tau, const OUSDEParams& params) {
  if (m0.size() != y.size()) throw invalid_input("ou_mean: shape mismatch");
  if (!(tau >= 0.0)) throw invalid_input("ou_mean: tau must be non-negative");
  const double decay = std::exp(-params.gamma * tau);
  std::vector<Complex> out(m0.size());
  for (std::size_t i = 0; i < m0.size(); ++i) out[i] = decay * m0[i] + (1.0 - decay) * y[i];
  return out;
}

double ou_sigma(double tau, const OUSDEParams& params) {
  const double ratio = params.sigma_max / params.sigma_min;
  const double log_ratio = std::log(ratio);
  const double bracket = std::pow(ratio, 2.0 * tau) - std::exp(-2.0 * params.gamma * tau);
  const double var = params.sigma_min * params.sigma_min * bracket * log_ratio /
                     (params.gamma + log_ratio);
  return std::sqrt(std::max(var, 0.0));
}

std::vector<Complex> forward_perturb(std::span<const Complex> m0, std::span<const Complex> m_pur,
                                     double tau, std::span<const Complex> z,
                                     const OUSDEParams& params) {
  if (z.size() != m0.size()) throw invalid_input("forward_perturb: shape mismatch");
  auto out = ou_mean(m0, m_pur, tau, params);
  const double sigma = ou_sigma(tau, params);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * z[i];
  return out;
}

double dsm_loss(std::span<const Complex> score, std::span<const Complex> z, double sigma) {
  if (!(sigma > 0.0)) throw invalid_input("dsm_loss: sigma must be positive");
  if (score.size() != z.size() || score.empty()) throw invalid_input("dsm_loss: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) total += std::norm(score[i] + z[i] / sigma);
  return total / static_cast<double>(score.size());
}

}  // namespace vpure::refiner
