#include "vpure/diffusion/purifier.hpp"

#include <algorithm>
#include <numeric>

#include "vpure/common/error.hpp"
#include "vpure/common/log.hpp"
#include "vpure/common/random.hpp"
#include "vpure/nn/optim.hpp"
#include "vpure/nn/serialize.hpp"

namespace vpure::diffusion {

audio::Waveform purify(const audio::Waveform& x_adv, const NoisePredictor& model,
                       const NoiseSchedule& schedule, const PurifierSettings& settings,
                       std::uint64_t rng_seed) {
  if (settings.t_pur == 0) return x_adv;
  if (settings.t_pur < 0 || settings.t_pur > schedule.t_max()) {
    throw invalid_input("purify: t_pur must lie in [0, T_max]");
  }
  auto chunked = audio::chunk_fixed(x_adv, settings.chunk_len);
  for (std::size_t k = 0; k < chunked.chunks.size(); ++k) {
    auto& chunk = chunked.chunks[k].samples;
    Rng rng(derive_seed(rng_seed, "purify.chunk", k));
    const auto noise = normal_vector(rng, chunk.size());
    auto x = forward_diffuse(chunk, settings.t_pur, noise, schedule);
    for (int t = settings.t_pur; t >= 1; --t) {
      const auto z = normal_vector(rng, x.size());
      x = reverse_step(x, t, model, schedule, z);
    }
    chunk = std::move(x);
  }
  auto out = audio::concat_chunks(chunked);
  audio::clip_unit(out.samples);
  return out;
}

PurifierTrainingResult train_purifier(const std::vector<audio::Waveform>& dataset,
                                      const NoiseSchedule& schedule,
                                      const PurifierTrainingConfig& config) {
  if (dataset.empty()) throw invalid_input("train_purifier: empty dataset");
  if (config.epochs < 1 || config.batch_size < 1 || config.crop_len < 1) {
    throw invalid_input("train_purifier: invalid training config");
  }
  const int t_hi = config.t_sample_max > 0 ? std::min(config.t_sample_max, schedule.t_max())
                                           : schedule.t_max();
  PurifierTrainingResult result{WaveDenoiser(config.arch, derive_seed(config.seed, "purifier.init")),
                                {}};
  auto& model = result.model;
  nn::Adam adam(model.parameters(), {.lr = config.learning_rate});
  Rng rng(derive_seed(config.seed, "purifier.train"));
  std::uniform_int_distribution<int> pick_t(1, t_hi);
  std::uniform_int_distribution<std::size_t> pick_clip(0, dataset.size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t steps_per_epoch =
      (dataset.size() + config.batch_size - 1) / config.batch_size;
  WaveDenoiser::Cache cache;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      adam.zero_grad();
      double batch_loss = 0.0;
      for (int b = 0; b < config.batch_size; ++b) {
        const auto& clip = dataset[pick_clip(rng)].samples;
        const std::size_t len = std::min(config.crop_len, std::max<std::size_t>(clip.size(), 1));
        std::vector<double> x0(len, 0.0);
        if (clip.size() > len) {
          std::uniform_int_distribution<std::size_t> pick_off(0, clip.size() - len);
          const std::size_t off = pick_off(rng);
          std::copy_n(clip.begin() + static_cast<long>(off), len, x0.begin());
        } else {
          std::copy(clip.begin(), clip.end(), x0.begin());
        }
        const int t = pick_t(rng);
        std::vector<double> eps(len);
        for (auto& e : eps) e = gauss(rng);
        const auto xt = forward_diffuse(x0, t, eps, schedule);
        const std::vector<float> xf(xt.begin(), xt.end());
        const auto pred = model.forward(xf, t, cache);
        std::vector<float> grad(len);
        double loss = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double d = pred[i] - eps[i];
          loss += d * d;
          grad[i] = static_cast<float>(2.0 * d / static_cast<double>(len));
        }
        batch_loss += loss / static_cast<double>(len);
        model.backward(cache, grad);
      }
      adam.step(1.0 / config.batch_size);
      epoch_loss += batch_loss / config.batch_size;
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);
    result.epoch_loss.push_back(epoch_loss);
    logger()->debug("purifier epoch {} loss {:.6f}", epoch, epoch_loss);
  }
  return result;
}

void save_purifier(const std::filesystem::path& path, WaveDenoiser& model,
                   const NoiseSchedule& schedule, const PurifierSettings& settings) {
  nn::json doc = {
      {"format", "vpure.purifier"},
      {"version", 1},
      {"arch", model.arch().to_json()},
      {"schedule",
       {{"t_max", schedule.t_max()},
        {"beta_start", schedule.beta_start},
        {"beta_end", schedule.beta_end},
        {"fingerprint", schedule.fingerprint()}}},
      {"settings", {{"t_pur", settings.t_pur}, {"chunk_len", settings.chunk_len}}},
      {"params", nn::params_to_json(model.parameters())},
  };
  nn::write_container(path, doc);
}

PurifierCheckpoint load_purifier(const std::filesystem::path& path) {
  const auto doc = nn::read_container(path, "vpure.purifier", 1);
  const auto& s = doc.at("schedule");
  PurifierCheckpoint ck{WaveDenoiser(DenoiserArch::from_json(doc.at("arch"))),
                        build_schedule(s.at("t_max"), s.at("beta_start"), s.at("beta_end")),
                        {}};
  ck.settings.t_pur = doc.at("settings").at("t_pur");
  ck.settings.chunk_len = doc.at("settings").at("chunk_len");
  nn::params_from_json(doc.at("params"), ck.model.parameters());
  return ck;
}

}  // namespace vpure::diffusion
