#include "vpure/nn/optim.hpp"

#include <cmath>

namespace vpure::nn {

Adam::Adam(std::vector<Param*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step(double scale) {
  double norm_sq = 0.0;
  for (const auto* p : params_)
    for (float g : p->grad) norm_sq += static_cast<double>(g) * g * scale * scale;
  double clip = 1.0;
  const double norm = std::sqrt(norm_sq);
  if (config_.grad_clip > 0.0 && norm > config_.grad_clip) clip = config_.grad_clip / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i] * scale * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double update = config_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
      p.value[i] -= static_cast<float>(update);
    }
  }
}

}  // namespace vpure::nn
