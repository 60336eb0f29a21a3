#pragma once

#include <vector>

#include "vpure/nn/tensor.hpp"

namespace vpure::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig config);

  void zero_grad();
  /// Scales all gradients by `scale` before the update (batch averaging).
  void step(double scale = 1.0);
  void set_lr(double lr) { config_.lr = lr; }

 private:
  std::vector<Param*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace vpure::nn
