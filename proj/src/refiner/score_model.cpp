#include "vpure/refiner/score_model.hpp"

#include <cmath>

#include "vpure/common/error.hpp"

namespace vpure::refiner {
namespace {

constexpr int kInputChannels = 5;

// Per-channel bias offsets for the five hidden convolutions, as multiples
// of the base width: conv1 C, conv2 C, conv3 2C, conv4 2C, conv5 C.
constexpr int kBiasOffsets[] = {0, 1, 2, 4, 6, 7};

std::span<const float> bias_slice(const std::vector<float>& biases, int c, int layer) {
  return std::span<const float>(biases).subspan(kBiasOffsets[layer] * c,
                                                (kBiasOffsets[layer + 1] - kBiasOffsets[layer]) * c);
}

}  // namespace

nlohmann::json ScoreNetArch::to_json() const {
  return {{"channels", channels}, {"embed_dim", embed_dim}, {"residual_std", residual_std}};
}

ScoreNetArch ScoreNetArch::from_json(const nlohmann::json& j) {
  ScoreNetArch a;
  a.channels = j.at("channels");
  a.embed_dim = j.at("embed_dim");
  a.residual_std = j.value("residual_std", a.residual_std);
  return a;
}

ScoreUNet::ScoreUNet(const ScoreNetArch& arch, const OUSDEParams& params, std::uint64_t seed)
    : arch_(arch), params_(params) {
  if (arch.channels < 1 || arch.embed_dim < 2 || !(arch.residual_std > 0.0)) throw invalid_input("ScoreUNet: invalid architecture");
  params.validate();
  const int c = arch.channels;
  Rng rng(seed);
  time1_ = nn::Linear("time1", arch.embed_dim, 2 * c);
  time2_ = nn::Linear("time2", 2 * c, kBiasOffsets[5] * c);
  conv1_ = nn::Conv2d("conv1", kInputChannels, c, 3);
  conv2_ = nn::Conv2d("conv2", c, c, 3);
  conv3_ = nn::Conv2d("conv3", c, 2 * c, 3);
  conv4_ = nn::Conv2d("conv4", 2 * c, 2 * c, 3);
  conv5_ = nn::Conv2d("conv5", 3 * c, c, 3);
  out_ = nn::Conv2d("out", c, 2, 3);
  time1_.init(rng);
  time2_.init(rng);
  conv1_.init(rng);
  conv2_.init(rng);
  conv3_.init(rng);
  conv4_.init(rng);
  conv5_.init(rng);
  out_.zero_init();
}

std::vector<nn::Param*> ScoreUNet::parameters() {
  std::vector<nn::Param*> out;
  time1_.collect(out);
  time2_.collect(out);
  conv1_.collect(out);
  conv2_.collect(out);
  conv3_.collect(out);
  conv4_.collect(out);
  conv5_.collect(out);
  out_.collect(out);
  return out;
}

ScoreUNet::Preconditioning ScoreUNet::preconditioning(double tau) const {
  Preconditioning p;
  p.decay = std::exp(-params_.gamma * tau);
  p.sigma = ou_sigma(tau, params_);
  const double v = arch_.residual_std * arch_.residual_std;
  const double total = p.decay * p.decay * v + p.sigma * p.sigma;
  p.c_in = 1.0 / std::sqrt(total);
  p.c_skip = p.decay * v / total;
  p.c_out = p.sigma * arch_.residual_std / std::sqrt(total);
  return p;
}

nn::Tensor ScoreUNet::pack_input(std::span<const Complex> m_tau, const ScoreCondition& cond,
                                 double tau) const {
  const std::size_t plane = static_cast<std::size_t>(cond.n_bins) * cond.n_frames;
  if (m_tau.size() != plane || cond.m_pur.size() != plane || cond.lambda.size() != plane) {
    throw invalid_input("score: input shapes do not match the conditioning");
  }
  const double c_in = preconditioning(tau).c_in;
  nn::Tensor x(kInputChannels, cond.n_bins, cond.n_frames);
  for (std::size_t i = 0; i < plane; ++i) {
    const Complex a = c_in * (m_tau[i] - cond.m_pur[i]);
    x.v[i] = static_cast<float>(a.real());
    x.v[plane + i] = static_cast<float>(a.imag());
    x.v[2 * plane + i] = static_cast<float>(cond.m_pur[i].real());
    x.v[3 * plane + i] = static_cast<float>(cond.m_pur[i].imag());
    x.v[4 * plane + i] = static_cast<float>(cond.lambda[i]);
  }
  return x;
}

nn::Tensor ScoreUNet::forward(const nn::Tensor& input, double tau, Cache& cache) const {
  const int c = arch_.channels;
  cache.x = input;
  cache.t0 = nn::sinusoidal_embedding(1000.0 * tau, arch_.embed_dim);
  cache.t1_pre = time1_.forward(cache.t0);
  cache.t1 = nn::silu(cache.t1_pre);
  cache.biases = time2_.forward(cache.t1);

  cache.a1 = conv1_.forward(input);
  nn::add_channel_bias(cache.a1, bias_slice(cache.biases, c, 0));
  cache.e1 = nn::silu(cache.a1);
  cache.e2_pre = conv2_.forward(cache.e1);
  nn::add_channel_bias(cache.e2_pre, bias_slice(cache.biases, c, 1));
  cache.e2 = nn::silu(cache.e2_pre);

  cache.pooled = nn::avg_pool2(cache.e2);
  cache.a3 = conv3_.forward(cache.pooled);
  nn::add_channel_bias(cache.a3, bias_slice(cache.biases, c, 2));
  cache.e3 = nn::silu(cache.a3);
  cache.a4 = conv4_.forward(cache.e3);
  nn::add_channel_bias(cache.a4, bias_slice(cache.biases, c, 3));
  cache.e4 = nn::silu(cache.a4);

  cache.cat = nn::concat_channels(nn::upsample2(cache.e4, input.h, input.w), cache.e2);
  cache.a5 = conv5_.forward(cache.cat);
  nn::add_channel_bias(cache.a5, bias_slice(cache.biases, c, 4));
  cache.e5 = nn::silu(cache.a5);
  return out_.forward(cache.e5);
}

void ScoreUNet::backward(const Cache& cache, const nn::Tensor& grad_out) {
  const int c = arch_.channels;
  std::vector<float> g_bias(cache.biases.size(), 0.0f);
  auto collect_bias = [&](const nn::Tensor& g, int layer) {
    const auto sums = nn::channel_sums(g);
    for (std::size_t k = 0; k < sums.size(); ++k) g_bias[kBiasOffsets[layer] * c + k] += sums[k];
  };

  nn::Tensor g = out_.backward(cache.e5, grad_out);
  g = nn::silu_backward(cache.a5, g);
  collect_bias(g, 4);
  const nn::Tensor g_cat = conv5_.backward(cache.cat, g);
  nn::Tensor g_up, g_e2;
  nn::split_channels(g_cat, 2 * c, g_up, g_e2);
  nn::Tensor g_e4 = nn::upsample2_backward(g_up, cache.e4.h, cache.e4.w);

  g = nn::silu_backward(cache.a4, g_e4);
  collect_bias(g, 3);
  g = conv4_.backward(cache.e3, g);
  g = nn::silu_backward(cache.a3, g);
  collect_bias(g, 2);
  g = conv3_.backward(cache.pooled, g);
  const nn::Tensor g_pool = nn::avg_pool2_backward(cache.e2, g);
  for (std::size_t i = 0; i < g_e2.size(); ++i) g_e2.v[i] += g_pool.v[i];

  g = nn::silu_backward(cache.e2_pre, g_e2);
  collect_bias(g, 1);
  g = conv2_.backward(cache.e1, g);
  g = nn::silu_backward(cache.a1, g);
  collect_bias(g, 0);
  conv1_.backward(cache.x, g);

  const auto g_t1 = time2_.backward(cache.t1, g_bias);
  const auto g_t1_pre = nn::silu_backward(cache.t1_pre, g_t1);
  time1_.backward(cache.t0, g_t1_pre);
}

std::vector<Complex> ScoreUNet::score(std::span<const Complex> m_tau, const ScoreCondition& cond,
                                      double tau) const {
  Cache cache;
  const nn::Tensor f = forward(pack_input(m_tau, cond, tau), tau, cache);
  const auto p = preconditioning(tau);
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  const std::size_t plane = m_tau.size();
  std::vector<Complex> out(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const Complex a = m_tau[i] - cond.m_pur[i];
    const Complex d_hat = p.c_skip * a + p.c_out * Complex(f.v[i], f.v[plane + i]);
    out[i] = -(a - p.decay * d_hat) * inv_var;
  }
  return out;
}

}  // namespace vpure::refiner
