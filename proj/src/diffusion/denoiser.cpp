#include "vpure/diffusion/denoiser.hpp"

#include <cmath>

#include "vpure/common/error.hpp"

namespace vpure::diffusion {
namespace {

constexpr float kInvSqrt2 = 0.70710678118654752f;

}  // namespace

nlohmann::json DenoiserArch::to_json() const {
  return {{"channels", channels},
          {"blocks", blocks},
          {"dilation_cycle", dilation_cycle},
          {"embed_dim", embed_dim}};
}

DenoiserArch DenoiserArch::from_json(const nlohmann::json& j) {
  DenoiserArch a;
  a.channels = j.at("channels");
  a.blocks = j.at("blocks");
  a.dilation_cycle = j.at("dilation_cycle");
  a.embed_dim = j.at("embed_dim");
  return a;
}

WaveDenoiser::WaveDenoiser(const DenoiserArch& arch, std::uint64_t seed) : arch_(arch) {
  if (arch.channels < 1 || arch.blocks < 1 || arch.dilation_cycle < 1 || arch.embed_dim < 2) {
    throw invalid_input("WaveDenoiser: invalid architecture");
  }
  build(seed);
}

void WaveDenoiser::build(std::uint64_t seed) {
  const int c = arch_.channels;
  Rng rng(seed);
  embed1_ = nn::Linear("embed1", arch_.embed_dim, 2 * c);
  embed2_ = nn::Linear("embed2", 2 * c, c);
  input_ = nn::Conv1d("input", 1, c, 1);
  embed1_.init(rng);
  embed2_.init(rng);
  input_.init(rng);
  blocks_.clear();
  for (int b = 0; b < arch_.blocks; ++b) {
    const int dilation = 1 << (b % arch_.dilation_cycle);
    const std::string name = "block" + std::to_string(b);
    Block blk{nn::Linear(name + ".step", c, c),
              nn::Conv1d(name + ".dilated", c, 2 * c, 3, dilation),
              nn::Conv1d(name + ".output", c, 2 * c, 1)};
    blk.step_proj.init(rng);
    blk.dilated.init(rng);
    blk.output.init(rng);
    blocks_.push_back(std::move(blk));
  }
  skip_ = nn::Conv1d("skip", c, c, 1);
  final_ = nn::Conv1d("final", c, 1, 1);
  skip_.init(rng);
  final_.zero_init();
}

std::vector<nn::Param*> WaveDenoiser::parameters() {
  std::vector<nn::Param*> out;
  embed1_.collect(out);
  embed2_.collect(out);
  input_.collect(out);
  for (auto& b : blocks_) {
    b.step_proj.collect(out);
    b.dilated.collect(out);
    b.output.collect(out);
  }
  skip_.collect(out);
  final_.collect(out);
  return out;
}

std::vector<float> WaveDenoiser::forward(std::span<const float> x_t, int t,
                                         Cache& cache) const {
  const int c = arch_.channels;
  const int len = static_cast<int>(x_t.size());
  cache.e0 = nn::sinusoidal_embedding(static_cast<double>(t), arch_.embed_dim);
  cache.a1 = embed1_.forward(cache.e0);
  cache.e1 = nn::silu(cache.a1);
  cache.a2 = embed2_.forward(cache.e1);
  cache.e = nn::silu(cache.a2);

  cache.x = nn::Tensor(1, 1, len);
  std::copy(x_t.begin(), x_t.end(), cache.x.v.begin());
  cache.a_in = input_.forward(cache.x);
  nn::Tensor h = nn::silu(cache.a_in);

  nn::Tensor skip_sum(c, 1, len);
  cache.blocks.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& blk = blocks_[b];
    auto& bc = cache.blocks[b];
    bc.h_in = h;
    bc.proj = blk.step_proj.forward(cache.e);
    bc.y = h;
    nn::add_channel_bias(bc.y, bc.proj);
    bc.z = blk.dilated.forward(bc.y);
    bc.gate = nn::Tensor(c, 1, len);
    const float* za = bc.z.channel(0);
    const float* zb = bc.z.channel(c);
    for (std::size_t i = 0; i < bc.gate.size(); ++i) {
      bc.gate.v[i] = std::tanh(za[i]) * nn::sigmoid(zb[i]);
    }
    const nn::Tensor out = blk.output.forward(bc.gate);
    const float* res = out.channel(0);
    const float* skp = out.channel(c);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h.v[i] = (h.v[i] + res[i]) * kInvSqrt2;
      skip_sum.v[i] += skp[i];
    }
  }
  const float norm = 1.0f / std::sqrt(static_cast<float>(blocks_.size()));
  for (auto& v : skip_sum.v) v *= norm;
  cache.skip_in = std::move(skip_sum);
  cache.s_pre = skip_.forward(cache.skip_in);
  const nn::Tensor out = final_.forward(nn::silu(cache.s_pre));
  return out.v;
}

void WaveDenoiser::backward(const Cache& cache, std::span<const float> grad_out) {
  const int c = arch_.channels;
  const int len = cache.x.w;
  nn::Tensor g_final(1, 1, len);
  std::copy(grad_out.begin(), grad_out.end(), g_final.v.begin());
  const nn::Tensor s_post = nn::silu(cache.s_pre);
  nn::Tensor g = final_.backward(s_post, g_final);
  g = nn::silu_backward(cache.s_pre, g);
  nn::Tensor g_skip = skip_.backward(cache.skip_in, g);
  const float norm = 1.0f / std::sqrt(static_cast<float>(blocks_.size()));
  for (auto& v : g_skip.v) v *= norm;

  std::vector<float> g_e(c, 0.0f);
  nn::Tensor g_h(c, 1, len);
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    auto& blk = blocks_[bi];
    const auto& bc = cache.blocks[bi];
    nn::Tensor g_out(2 * c, 1, len);
    for (std::size_t i = 0; i < g_h.size(); ++i) {
      g_out.v[i] = g_h.v[i] * kInvSqrt2;
      g_out.v[g_h.size() + i] = g_skip.v[i];
      g_h.v[i] *= kInvSqrt2;
    }
    const nn::Tensor g_gate = blk.output.backward(bc.gate, g_out);
    nn::Tensor g_z(2 * c, 1, len);
    const float* za = bc.z.channel(0);
    const float* zb = bc.z.channel(c);
    for (std::size_t i = 0; i < g_gate.size(); ++i) {
      const float ta = std::tanh(za[i]);
      const float sb = nn::sigmoid(zb[i]);
      g_z.v[i] = g_gate.v[i] * sb * (1.0f - ta * ta);
      g_z.v[g_gate.size() + i] = g_gate.v[i] * ta * sb * (1.0f - sb);
    }
    const nn::Tensor g_y = blk.dilated.backward(bc.y, g_z);
    for (std::size_t i = 0; i < g_h.size(); ++i) g_h.v[i] += g_y.v[i];
    const auto g_proj = nn::channel_sums(g_y);
    const auto g_e_part = blk.step_proj.backward(cache.e, g_proj);
    for (int k = 0; k < c; ++k) g_e[k] += g_e_part[k];
  }
  const nn::Tensor g_ain = nn::silu_backward(cache.a_in, g_h);
  input_.backward(cache.x, g_ain);

  const auto g_a2 = nn::silu_backward(cache.a2, g_e);
  const auto g_e1 = embed2_.backward(cache.e1, g_a2);
  const auto g_a1 = nn::silu_backward(cache.a1, g_e1);
  embed1_.backward(cache.e0, g_a1);
}

std::vector<double> WaveDenoiser::predict_noise(std::span<const double> x_t, int t) const {
  std::vector<float> xf(x_t.begin(), x_t.end());
  Cache cache;
  const auto out = forward(xf, t, cache);
  return {out.begin(), out.end()};
}

}  // namespace vpure::diffusion
