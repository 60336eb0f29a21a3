#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vpure/common/random.hpp"
#include "vpure/nn/tensor.hpp"

namespace vpure::nn {

// Layers keep no activation state: forward() is const and thread-safe, and
// backward() takes the forward input again. Parameter gradients accumulate
// into Param::grad.

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, int in, int out, int kernel, int dilation = 1);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);
  void init(Rng& rng, float scale = 1.0f);
  void zero_init();
  void collect(std::vector<Param*>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  std::vector<float> im2col(const Tensor& x) const;
  int in_ = 0, out_ = 0, kernel_ = 1, dilation_ = 1;
  Param weight_, bias_;
};

/// Stride-1 convolution with same padding.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);
  void init(Rng& rng, float scale = 1.0f);
  void zero_init();
  void collect(std::vector<Param*>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  /// Unfolds output rows [y0, y1) into `cols`.
  void im2col(const Tensor& x, int y0, int y1, std::vector<float>& cols) const;
  int tile_rows(const Tensor& x) const;
  int in_ = 0, out_ = 0, kernel_ = 3;
  Param weight_, bias_;
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  std::vector<float> forward(std::span<const float> x) const;
  std::vector<float> backward(std::span<const float> x, std::span<const float> grad_out);
  void init(Rng& rng, float scale = 1.0f);
  void zero_init();
  void collect(std::vector<Param*>& out);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_ = 0, out_ = 0;
  Param weight_, bias_;
};

float silu(float x);
float silu_grad(float x);
float sigmoid(float x);

Tensor silu(const Tensor& x);
/// grad_in given pre-activation input x.
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);
std::vector<float> silu(std::span<const float> x);
std::vector<float> silu_backward(std::span<const float> x, std::span<const float> grad_out);

/// Adds a per-channel bias, broadcast over the plane.
void add_channel_bias(Tensor& x, std::span<const float> bias);
/// Sums grad over each channel plane.
std::vector<float> channel_sums(const Tensor& grad);

/// 2x2 average pooling; odd edges average the cells that exist.
Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& x, const Tensor& grad_out);
/// Nearest-neighbour upsampling to exactly (h, w).
Tensor upsample2(const Tensor& x, int h, int w);
Tensor upsample2_backward(const Tensor& grad_out, int h, int w);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

std::vector<float> sinusoidal_embedding(double position, int dim,
                                        double max_period = 10000.0);

}  // namespace vpure::nn
