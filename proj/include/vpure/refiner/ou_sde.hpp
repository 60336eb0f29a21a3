#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace vpure::refiner {

using Complex = std::complex<double>;

/// Ornstein-Uhlenbeck SDE with variance-exploding diffusion:
///   dm = gamma (y - m) dtau + g(tau) dw,
///   g(tau) = sigma_min (sigma_max/sigma_min)^tau sqrt(2 ln(sigma_max/sigma_min)).
struct OUSDEParams {
  double gamma = 1.5;
  double sigma_min = 0.05;
  double sigma_max = 0.5;
  double t_max = 1.0;
  double tau_eps = 0.03;
  /// The SDE state is state_scale times the warped spectrogram.
  double state_scale = 0.15;

  void validate() const;
  double diffusion(double tau) const;
  nlohmann::json to_json() const;
  static OUSDEParams from_json(const nlohmann::json& j);
};

/// e^{-gamma tau} m0 + (1 - e^{-gamma tau}) y.
std::vector<Complex> ou_mean(std::span<const Complex> m0, std::span<const Complex> y,
                             double tau, const OUSDEParams& params);

/// Marginal standard deviation of the SDE started from a point mass.
double ou_sigma(double tau, const OUSDEParams& params);

/// ou_mean(m0, m_pur, tau) + ou_sigma(tau) z.
std::vector<Complex> forward_perturb(std::span<const Complex> m0, std::span<const Complex> m_pur,
                                     double tau, std::span<const Complex> z,
                                     const OUSDEParams& params);

/// Mean over elements of |score + z / sigma|^2.
double dsm_loss(std::span<const Complex> score, std::span<const Complex> z, double sigma);

}  // namespace vpure::refiner
