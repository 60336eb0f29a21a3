#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "vpure/nn/layers.hpp"
#include "vpure/refiner/ou_sde.hpp"

namespace vpure::refiner {

/// Conditioning channels of the score network. `lambda` is the phoneme
/// representation after square-root warping; both fields are bin-major
/// [n_bins x n_frames] and stay fixed through a sampling run.
struct ScoreCondition {
  int n_bins = 0;
  int n_frames = 0;
  std::span<const Complex> m_pur;
  std::span<const double> lambda;
};

class ScoreEstimator {
 public:
  virtual ~ScoreEstimator() = default;
  virtual std::vector<Complex> score(std::span<const Complex> m_tau,
                                     const ScoreCondition& cond, double tau) const = 0;
};

struct ScoreNetArch {
  int channels = 8;
  int embed_dim = 16;
  /// RMS of (clean - purified) in SDE-state units; sets the preconditioning.
  double residual_std = 0.2;

  nlohmann::json to_json() const;
  static ScoreNetArch from_json(const nlohmann::json& j);
};

/// Two-level U-shaped 2-D convolutional network over
/// [Re m_tau, Im m_tau, Re m_pur, Im m_pur, Lambda] with a Fourier time
/// embedding injected as per-channel biases.
///
/// With a = m_tau - m_pur = e d + sigma z (d = clean - purified,
/// e = exp(-gamma tau)), the network sees c_in a and the residual estimate is
///   d_hat = c_skip a + c_out F,
/// where c_skip is the linear MMSE gain for d of variance residual_std^2,
/// c_in normalises a, and c_out is the error scale of the linear estimate.
/// The score follows from the Gaussian kernel: s = -(a - e d_hat) / sigma^2.
class ScoreUNet : public ScoreEstimator {
 public:
  struct Cache {
    nn::Tensor x, a1, e2_pre, pooled, a3, a4, cat, a5;
    nn::Tensor e1, e2, e3, e4, e5;
    std::vector<float> t0, t1_pre, t1, biases;
  };

  explicit ScoreUNet(const ScoreNetArch& arch = {}, const OUSDEParams& params = {},
                     std::uint64_t seed = 0);

  std::vector<Complex> score(std::span<const Complex> m_tau, const ScoreCondition& cond,
                             double tau) const override;

  struct Preconditioning {
    double decay = 1.0;
    double sigma = 1.0;
    double c_in = 1.0;
    double c_skip = 0.0;
    double c_out = 1.0;
  };
  Preconditioning preconditioning(double tau) const;

  nn::Tensor pack_input(std::span<const Complex> m_tau, const ScoreCondition& cond,
                        double tau) const;
  /// Network output F as a 2-channel (Re, Im) tensor.
  nn::Tensor forward(const nn::Tensor& input, double tau, Cache& cache) const;
  void backward(const Cache& cache, const nn::Tensor& grad_out);

  std::vector<nn::Param*> parameters();
  const ScoreNetArch& arch() const { return arch_; }
  const OUSDEParams& sde() const { return params_; }

 private:
  ScoreNetArch arch_;
  OUSDEParams params_;
  nn::Linear time1_, time2_;
  nn::Conv2d conv1_, conv2_, conv3_, conv4_, conv5_, out_;
};

}  // namespace vpure::refiner
