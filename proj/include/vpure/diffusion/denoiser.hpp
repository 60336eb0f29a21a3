#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "vpure/diffusion/schedule.hpp"
#include "vpure/nn/layers.hpp"

namespace vpure::diffusion {

struct DenoiserArch {
  int channels = 16;
  int blocks = 8;
  int dilation_cycle = 8;
  int embed_dim = 32;

  nlohmann::json to_json() const;
  static DenoiserArch from_json(const nlohmann::json& j);
};

/// Small gated residual stack of dilated 1-D convolutions with a sinusoidal
/// diffusion-step embedding. Predicts the noise component of x_t.
class WaveDenoiser : public NoisePredictor {
 public:
  struct BlockCache {
    nn::Tensor h_in, y, z, gate;
    std::vector<float> proj;
  };
  struct Cache {
    std::vector<float> e0, a1, e1, a2, e;
    nn::Tensor x, a_in, skip_in, s_pre;
    std::vector<BlockCache> blocks;
  };

  explicit WaveDenoiser(const DenoiserArch& arch = {}, std::uint64_t seed = 0);

  std::vector<double> predict_noise(std::span<const double> x_t, int t) const override;

  /// Training path: forward that records activations, and the matching
  /// backward that accumulates parameter gradients.
  std::vector<float> forward(std::span<const float> x_t, int t, Cache& cache) const;
  void backward(const Cache& cache, std::span<const float> grad_out);

  std::vector<nn::Param*> parameters();
  const DenoiserArch& arch() const { return arch_; }

 private:
  struct Block {
    nn::Linear step_proj;
    nn::Conv1d dilated;
    nn::Conv1d output;
  };
  void build(std::uint64_t seed);

  DenoiserArch arch_;
  nn::Linear embed1_, embed2_;
  nn::Conv1d input_;
  std::vector<Block> blocks_;
  nn::Conv1d skip_, final_;
};

}  // namespace vpure::diffusion
