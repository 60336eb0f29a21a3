#include "vpure/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "vpure/common/error.hpp"

namespace vpure::nn {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void uniform_fill(std::vector<float>& v, Rng& rng, float bound) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& x : v) x = dist(rng);
}

// Eigen's vectorised sum peels by pointer alignment, so its rounding would
// depend on where the heap put the buffer.
float row_sum(const float* p, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += p[i];
  return static_cast<float>(s);
}

}  // namespace

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t total = 1;
  for (int d : shape) total *= static_cast<std::size_t>(d);
  value.assign(total, 0.0f);
  grad.assign(total, 0.0f);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(const std::string& name, int in, int out, int kernel, int dilation)
    : in_(in), out_(out), kernel_(kernel), dilation_(dilation),
      weight_(name + ".weight", {out, in, kernel}), bias_(name + ".bias", {out}) {
  if (kernel % 2 == 0) throw invalid_input("Conv1d: kernel must be odd");
}

void Conv1d::init(Rng& rng, float scale) {
  const float bound = scale / std::sqrt(static_cast<float>(in_ * kernel_));
  uniform_fill(weight_.value, rng, bound);
  uniform_fill(bias_.value, rng, bound);
}

void Conv1d::zero_init() {
  std::fill(weight_.value.begin(), weight_.value.end(), 0.0f);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

void Conv1d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::vector<float> Conv1d::im2col(const Tensor& x) const {
  const int len = x.w;
  const int half = (kernel_ - 1) / 2;
  std::vector<float> cols(static_cast<std::size_t>(in_) * kernel_ * len, 0.0f);
  for (int ci = 0; ci < in_; ++ci) {
    const float* src = x.channel(ci);
    for (int j = 0; j < kernel_; ++j) {
      const int off = (j - half) * dilation_;
      float* dst = cols.data() + static_cast<std::size_t>(ci * kernel_ + j) * len;
      const int lo = std::max(0, -off);
      const int hi = std::min(len, len - off);
      if (hi > lo) std::copy(src + lo + off, src + hi + off, dst + lo);
    }
  }
  return cols;
}

Tensor Conv1d::forward(const Tensor& x) const {
  if (x.c != in_ || x.h != 1) throw invalid_input("Conv1d: input shape mismatch");
  const int len = x.w;
  Tensor y(out_, 1, len);
  CMapR w(weight_.value.data(), out_, in_ * kernel_);
  MapR out(y.v.data(), out_, len);
  if (kernel_ == 1) {
    out.noalias() = w * CMapR(x.v.data(), in_, len);
  } else {
    const auto cols = im2col(x);
    out.noalias() = w * CMapR(cols.data(), in_ * kernel_, len);
  }
  for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[o];
  return y;
}

Tensor Conv1d::backward(const Tensor& x, const Tensor& grad_out) {
  const int len = x.w;
  CMapR g(grad_out.v.data(), out_, len);
  CMapR w(weight_.value.data(), out_, in_ * kernel_);
  MapR dw(weight_.grad.data(), out_, in_ * kernel_);
  for (int o = 0; o < out_; ++o) bias_.grad[o] += row_sum(g.data() + static_cast<std::size_t>(o) * g.cols(), static_cast<int>(g.cols()));
  Tensor gx(in_, 1, len);
  if (kernel_ == 1) {
    dw.noalias() += g * CMapR(x.v.data(), in_, len).transpose();
    MapR(gx.v.data(), in_, len).noalias() = w.transpose() * g;
    return gx;
  }
  const auto cols = im2col(x);
  dw.noalias() += g * CMapR(cols.data(), in_ * kernel_, len).transpose();
  MatR gcols = w.transpose() * g;
  const int half = (kernel_ - 1) / 2;
  for (int ci = 0; ci < in_; ++ci) {
    float* dst = gx.channel(ci);
    for (int j = 0; j < kernel_; ++j) {
      const int off = (j - half) * dilation_;
      const float* src = gcols.data() + static_cast<std::size_t>(ci * kernel_ + j) * len;
      const int lo = std::max(0, -off);
      const int hi = std::min(len, len - off);
      for (int t = lo; t < hi; ++t) dst[t + off] += src[t];
    }
  }
  return gx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int in, int out, int kernel)
    : in_(in), out_(out), kernel_(kernel),
      weight_(name + ".weight", {out, in, kernel, kernel}), bias_(name + ".bias", {out}) {
  if (kernel % 2 == 0) throw invalid_input("Conv2d: kernel must be odd");
}

void Conv2d::init(Rng& rng, float scale) {
  const float bound = scale / std::sqrt(static_cast<float>(in_ * kernel_ * kernel_));
  uniform_fill(weight_.value, rng, bound);
  uniform_fill(bias_.value, rng, bound);
}

void Conv2d::zero_init() {
  std::fill(weight_.value.begin(), weight_.value.end(), 0.0f);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Conv2d::im2col(const Tensor& x, int y0, int y1, std::vector<float>& cols) const {
  const int h = x.h, w = x.w, k = kernel_, half = (k - 1) / 2;
  const std::size_t span = static_cast<std::size_t>(y1 - y0) * w;
  cols.assign(static_cast<std::size_t>(in_) * k * k * span, 0.0f);
  for (int ci = 0; ci < in_; ++ci) {
    const float* src = x.channel(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int dy = ky - half, dx = kx - half;
        float* dst = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * span;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        if (x_hi <= x_lo) continue;
        for (int y = std::max(y0, -dy); y < std::min(y1, h - dy); ++y) {
          const float* row = src + static_cast<std::size_t>(y + dy) * w + dx;
          std::copy(row + x_lo, row + x_hi, dst + static_cast<std::size_t>(y - y0) * w + x_lo);
        }
      }
    }
  }
}

int Conv2d::tile_rows(const Tensor& x) const {
  // Keep one tile of unfolded input around 512 KB so it stays in cache.
  constexpr std::size_t kTileFloats = std::size_t{1} << 17;
  const std::size_t per_row = static_cast<std::size_t>(in_) * kernel_ * kernel_ * x.w;
  return static_cast<int>(std::max<std::size_t>(1, kTileFloats / std::max<std::size_t>(per_row, 1)));
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c != in_) throw invalid_input("Conv2d: input channel mismatch");
  const int plane = static_cast<int>(x.plane());
  const int rows = in_ * kernel_ * kernel_;
  Tensor y(out_, x.h, x.w);
  CMapR w(weight_.value.data(), out_, rows);
  MapR out(y.v.data(), out_, plane);
  if (kernel_ == 1) {
    out.noalias() = w * CMapR(x.v.data(), in_, plane);
  } else {
    std::vector<float> cols;
    const int step = tile_rows(x);
    for (int y0 = 0; y0 < x.h; y0 += step) {
      const int y1 = std::min(x.h, y0 + step);
      im2col(x, y0, y1, cols);
      const int span = (y1 - y0) * x.w;
      out.middleCols(y0 * x.w, span).noalias() = w * CMapR(cols.data(), rows, span);
    }
  }
  for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[o];
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
  const int plane = static_cast<int>(x.plane());
  const int k = kernel_, half = (k - 1) / 2;
  const int rows = in_ * k * k;
  CMapR g(grad_out.v.data(), out_, plane);
  CMapR w(weight_.value.data(), out_, rows);
  MapR dw(weight_.grad.data(), out_, rows);
  for (int o = 0; o < out_; ++o) bias_.grad[o] += row_sum(g.data() + static_cast<std::size_t>(o) * g.cols(), static_cast<int>(g.cols()));
  Tensor gx(in_, x.h, x.w);
  if (k == 1) {
    dw.noalias() += g * CMapR(x.v.data(), in_, plane).transpose();
    MapR(gx.v.data(), in_, plane).noalias() = w.transpose() * g;
    return gx;
  }
  const int h = x.h, wd = x.w;
  std::vector<float> cols;
  MatR gcols;
  const int step = tile_rows(x);
  for (int y0 = 0; y0 < h; y0 += step) {
    const int y1 = std::min(h, y0 + step);
    const int span = (y1 - y0) * wd;
    im2col(x, y0, y1, cols);
    const auto g_tile = g.middleCols(y0 * wd, span);
    dw.noalias() += g_tile * CMapR(cols.data(), rows, span).transpose();
    gcols.noalias() = w.transpose() * g_tile;
    for (int ci = 0; ci < in_; ++ci) {
      float* dst = gx.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int dy = ky - half, dx = kx - half;
          const float* src = gcols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * span;
          const int x_lo = std::max(0, -dx), x_hi = std::min(wd, wd - dx);
          for (int y = std::max(y0, -dy); y < std::min(y1, h - dy); ++y) {
            float* row = dst + static_cast<std::size_t>(y + dy) * wd + dx;
            const float* in = src + static_cast<std::size_t>(y - y0) * wd;
            for (int xx = x_lo; xx < x_hi; ++xx) row[xx] += in[xx];
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in, int out)
    : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {}

void Linear::init(Rng& rng, float scale) {
  const float bound = scale / std::sqrt(static_cast<float>(in_));
  uniform_fill(weight_.value, rng, bound);
  uniform_fill(bias_.value, rng, bound);
}

void Linear::zero_init() {
  std::fill(weight_.value.begin(), weight_.value.end(), 0.0f);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::vector<float> Linear::forward(std::span<const float> x) const {
  if (static_cast<int>(x.size()) != in_) throw invalid_input("Linear: input size mismatch");
  std::vector<float> y(bias_.value);
  CMapR w(weight_.value.data(), out_, in_);
  Eigen::Map<Eigen::VectorXf>(y.data(), out_).noalias() +=
      w * Eigen::Map<const Eigen::VectorXf>(x.data(), in_);
  return y;
}

std::vector<float> Linear::backward(std::span<const float> x,
                                    std::span<const float> grad_out) {
  Eigen::Map<const Eigen::VectorXf> g(grad_out.data(), out_);
  Eigen::Map<const Eigen::VectorXf> xv(x.data(), in_);
  MapR(weight_.grad.data(), out_, in_).noalias() += g * xv.transpose();
  for (int o = 0; o < out_; ++o) bias_.grad[o] += grad_out[o];
  std::vector<float> gx(in_);
  Eigen::Map<Eigen::VectorXf>(gx.data(), in_).noalias() =
      CMapR(weight_.value.data(), out_, in_).transpose() * g;
  return gx;
}

// ---------------------------------------------------------------- helpers

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }
float silu(float x) { return x * sigmoid(x); }
float silu_grad(float x) {
  const float s = sigmoid(x);
  return s * (1.0f + x * (1.0f - s));
}

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) v = silu(v);
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] *= silu_grad(x.v[i]);
  return g;
}

std::vector<float> silu(std::span<const float> x) {
  std::vector<float> y(x.begin(), x.end());
  for (auto& v : y) v = silu(v);
  return y;
}

std::vector<float> silu_backward(std::span<const float> x, std::span<const float> grad_out) {
  std::vector<float> g(grad_out.begin(), grad_out.end());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= silu_grad(x[i]);
  return g;
}

void add_channel_bias(Tensor& x, std::span<const float> bias) {
  for (int ci = 0; ci < x.c; ++ci) {
    float* p = x.channel(ci);
    const float b = bias[ci];
    for (std::size_t i = 0; i < x.plane(); ++i) p[i] += b;
  }
}

std::vector<float> channel_sums(const Tensor& grad) {
  std::vector<float> out(grad.c, 0.0f);
  for (int ci = 0; ci < grad.c; ++ci) {
    const float* p = grad.channel(ci);
    double s = 0.0;
    for (std::size_t i = 0; i < grad.plane(); ++i) s += p[i];
    out[ci] = static_cast<float>(s);
  }
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  const int h2 = (x.h + 1) / 2, w2 = (x.w + 1) / 2;
  Tensor y(x.c, h2, w2);
  for (int ci = 0; ci < x.c; ++ci) {
    for (int y2 = 0; y2 < h2; ++y2) {
      for (int x2 = 0; x2 < w2; ++x2) {
        float s = 0.0f;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y2 + dy, xx = 2 * x2 + dx;
            if (yy < x.h && xx < x.w) {
              s += x.at(ci, yy, xx);
              ++n;
            }
          }
        }
        y.at(ci, y2, x2) = s / static_cast<float>(n);
      }
    }
  }
  return y;
}

Tensor avg_pool2_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g(x.c, x.h, x.w);
  for (int ci = 0; ci < x.c; ++ci) {
    for (int y2 = 0; y2 < grad_out.h; ++y2) {
      for (int x2 = 0; x2 < grad_out.w; ++x2) {
        const int ny = std::min(2, x.h - 2 * y2), nx = std::min(2, x.w - 2 * x2);
        const float share = grad_out.at(ci, y2, x2) / static_cast<float>(ny * nx);
        for (int dy = 0; dy < ny; ++dy)
          for (int dx = 0; dx < nx; ++dx) g.at(ci, 2 * y2 + dy, 2 * x2 + dx) += share;
      }
    }
  }
  return g;
}

Tensor upsample2(const Tensor& x, int h, int w) {
  Tensor y(x.c, h, w);
  for (int ci = 0; ci < x.c; ++ci)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
  return y;
}

Tensor upsample2_backward(const Tensor& grad_out, int h, int w) {
  Tensor g(grad_out.c, h, w);
  for (int ci = 0; ci < grad_out.c; ++ci)
    for (int yy = 0; yy < grad_out.h; ++yy)
      for (int xx = 0; xx < grad_out.w; ++xx)
        g.at(ci, yy / 2, xx / 2) += grad_out.at(ci, yy, xx);
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.h != b.h || a.w != b.w) throw invalid_input("concat_channels: plane mismatch");
  Tensor y(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<long>(a.v.size()));
  return y;
}

void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
  ga = Tensor(ca, g.h, g.w);
  gb = Tensor(g.c - ca, g.h, g.w);
  std::copy(g.v.begin(), g.v.begin() + static_cast<long>(ga.v.size()), ga.v.begin());
  std::copy(g.v.begin() + static_cast<long>(ga.v.size()), g.v.end(), gb.v.begin());
}

std::vector<float> sinusoidal_embedding(double position, int dim, double max_period) {
  std::vector<float> out(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(max_period) * i / std::max(1, half - 1));
    out[i] = static_cast<float>(std::sin(position * freq));
    out[half + i] = static_cast<float>(std::cos(position * freq));
  }
  return out;
}

}  // namespace vpure::nn
