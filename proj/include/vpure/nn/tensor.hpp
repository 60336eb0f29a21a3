#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vpure::nn {

/// Dense CHW float tensor. 1-D signals use h == 1.
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c(channels), h(height), w(width),
        v(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return v.size(); }
  float* channel(int ci) { return v.data() + ci * plane(); }
  const float* channel(int ci) const { return v.data() + ci * plane(); }
  float& at(int ci, int y, int x) { return v[ci * plane() + static_cast<std::size_t>(y) * w + x]; }
  float at(int ci, int y, int x) const { return v[ci * plane() + static_cast<std::size_t>(y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

}  // namespace vpure::nn
