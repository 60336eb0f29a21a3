#include "vpure/protect/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "vpure/common/error.hpp"
#include "vpure/common/log.hpp"
#include "vpure/common/random.hpp"
#include "vpure/nn/optim.hpp"
#include "vpure/nn/serialize.hpp"

namespace vpure::protect {
namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatD as_matrix(const nn::Param& p, int rows, int cols) {
  return Eigen::Map<const MatF>(p.value.data(), rows, cols).cast<double>();
}

Eigen::VectorXd as_vector(const nn::Param& p) {
  return Eigen::Map<const Eigen::VectorXf>(p.value.data(), static_cast<Eigen::Index>(p.size()))
      .cast<double>();
}

void init_uniform(nn::Param& p, Rng& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : p.value) v = static_cast<float>(u(rng));
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw invalid_input("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

nlohmann::json EncoderArch::to_json() const {
  return {{"hidden", hidden}, {"dim", dim}, {"log_floor", log_floor}};
}

EncoderArch EncoderArch::from_json(const nlohmann::json& j) {
  EncoderArch a;
  a.hidden = j.value("hidden", a.hidden);
  a.dim = j.value("dim", a.dim);
  a.log_floor = j.value("log_floor", a.log_floor);
  return a;
}

ToySpeakerEncoder::ToySpeakerEncoder(EncoderArch arch, const audio::SpectrogramConfig& stft,
                                     std::uint64_t init_seed)
    : arch_(arch), stft_(stft) {
  stft_.validate();
  if (arch_.hidden < 1 || arch_.dim < 1 || !(arch_.log_floor > 0.0)) {
    throw invalid_input("ToySpeakerEncoder: invalid architecture");
  }
  const int bins = stft_.n_bins();
  w1_ = nn::Param("enc.w1", {arch_.hidden, bins});
  b1_ = nn::Param("enc.b1", {arch_.hidden});
  w2_ = nn::Param("enc.w2", {arch_.dim, arch_.hidden});
  b2_ = nn::Param("enc.b2", {arch_.dim});
  Rng rng(init_seed);
  init_uniform(w1_, rng, 1.0 / std::sqrt(static_cast<double>(bins)));
  init_uniform(w2_, rng, 1.0 / std::sqrt(static_cast<double>(arch_.hidden)));
}

std::vector<nn::Param*> ToySpeakerEncoder::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

std::vector<double> ToySpeakerEncoder::features(const audio::Waveform& x, int& n_frames) const {
  const auto spec = audio::stft(x, stft_);
  const int bins = spec.n_bins;
  n_frames = spec.n_frames;
  std::vector<double> power(spec.size());
  for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(spec.data[i]);
  const double floor = floor_level(power);
  std::vector<double> feats(power.size());
  for (int b = 0; b < bins; ++b)
    for (int f = 0; f < n_frames; ++f)
      feats[static_cast<std::size_t>(f) * bins + b] =
          std::log(power[static_cast<std::size_t>(b) * n_frames + f] + floor);
  const double mean = std::accumulate(feats.begin(), feats.end(), 0.0) / static_cast<double>(feats.size());
  for (auto& v : feats) v -= mean;
  return feats;
}

double ToySpeakerEncoder::floor_level(std::span<const double> power) const {
  const double mean = std::accumulate(power.begin(), power.end(), 0.0) / static_cast<double>(power.size());
  return arch_.log_floor * mean + kAbsoluteFloor;
}

std::vector<double> ToySpeakerEncoder::project(std::span<const double> feats, int n_frames,
                                               std::vector<double>* hidden) const {
  const int bins = stft_.n_bins();
  const Eigen::Map<const MatD> x(feats.data(), n_frames, bins);
  MatD h = x * as_matrix(w1_, arch_.hidden, bins).transpose();
  h.rowwise() += as_vector(b1_).transpose();
  h = h.array().tanh();
  const Eigen::VectorXd pooled = h.colwise().mean().transpose();
  const Eigen::VectorXd e = as_matrix(w2_, arch_.dim, arch_.hidden) * pooled + as_vector(b2_);
  if (hidden) hidden->assign(h.data(), h.data() + h.size());
  return {e.data(), e.data() + e.size()};
}

std::vector<double> ToySpeakerEncoder::embed(const audio::Waveform& x) const {
  int frames = 0;
  const auto feats = features(x, frames);
  auto e = project(feats, frames);
  double norm = 0.0;
  for (double v : e) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error(ErrorKind::kDegenerate, "embed: zero embedding");
  for (auto& v : e) v /= norm;
  return e;
}

std::vector<double> ToySpeakerEncoder::embed_gradient(const audio::Waveform& x,
                                                      std::span<const double> direction) const {
  if (static_cast<int>(direction.size()) != arch_.dim) {
    throw invalid_input("embed_gradient: direction has wrong dimension");
  }
  const auto spec = audio::stft(x, stft_);
  const int bins = spec.n_bins;
  const int frames = spec.n_frames;
  int unused = 0;
  const auto feats = features(x, unused);
  std::vector<double> hidden;
  const auto raw = project(feats, frames, &hidden);

  const Eigen::Map<const Eigen::VectorXd> e(raw.data(), arch_.dim);
  const Eigen::Map<const Eigen::VectorXd> d(direction.data(), arch_.dim);
  const double norm = e.norm();
  const Eigen::VectorXd u = e / norm;
  const Eigen::VectorXd ge = (d - u * u.dot(d)) / norm;
  const Eigen::VectorXd gpool = as_matrix(w2_, arch_.dim, arch_.hidden).transpose() * ge;
  const Eigen::Map<const MatD> h(hidden.data(), frames, arch_.hidden);
  MatD gpre = (1.0 - h.array().square()).matrix();
  gpre.array().rowwise() *= (gpool / frames).transpose().array();
  MatD gfeat = gpre * as_matrix(w1_, arch_.hidden, bins);
  gfeat.array() -= gfeat.mean();

  std::vector<double> power(spec.size());
  for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(spec.data[i]);
  const double floor = floor_level(power);
  // The floor tracks mean power, so every bin also feeds it.
  double through_floor = 0.0;
  for (int b = 0; b < bins; ++b)
    for (int f = 0; f < frames; ++f)
      through_floor += gfeat(f, b) / (power[static_cast<std::size_t>(b) * frames + f] + floor);
  through_floor *= arch_.log_floor / static_cast<double>(power.size());

  audio::ComplexSpectrogram gspec(stft_, frames);
  for (int b = 0; b < bins; ++b) {
    for (int f = 0; f < frames; ++f) {
      const auto z = spec.at(b, f);
      const double dp = gfeat(f, b) / (std::norm(z) + floor) + through_floor;
      gspec.at(b, f) = 2.0 * dp * z;
    }
  }
  return audio::stft_adjoint(gspec, x.size());
}

void ToySpeakerEncoder::backward(std::span<const double> feats, int n_frames,
                                 std::span<const double> hidden,
                                 std::span<const double> grad_embedding) {
  const int bins = stft_.n_bins();
  const Eigen::Map<const MatD> x(feats.data(), n_frames, bins);
  const Eigen::Map<const MatD> h(hidden.data(), n_frames, arch_.hidden);
  const Eigen::Map<const Eigen::VectorXd> ge(grad_embedding.data(), arch_.dim);
  const Eigen::VectorXd pooled = h.colwise().mean().transpose();

  const MatD gw2 = ge * pooled.transpose();
  const Eigen::VectorXd gpool = as_matrix(w2_, arch_.dim, arch_.hidden).transpose() * ge;
  MatD gpre = (1.0 - h.array().square()).matrix();
  gpre.array().rowwise() *= (gpool / n_frames).transpose().array();
  const MatD gw1 = gpre.transpose() * x;
  const Eigen::VectorXd gb1 = gpre.colwise().sum().transpose();

  auto acc = [](nn::Param& p, const double* g) {
    for (std::size_t i = 0; i < p.size(); ++i) p.grad[i] += static_cast<float>(g[i]);
  };
  acc(w1_, gw1.data());
  acc(b1_, gb1.data());
  acc(w2_, gw2.data());
  acc(b2_, ge.data());
}

ToySpeakerEncoder train_toy_encoder(const std::vector<LabeledClip>& corpus,
                                    const EncoderTrainingConfig& config,
                                    const audio::SpectrogramConfig& stft) {
  std::map<std::string, int> ids;
  std::map<std::string, int> counts;
  for (const auto& c : corpus) {
    ids.emplace(c.speaker, 0);
    ++counts[c.speaker];
  }
  if (ids.size() < 2) throw invalid_input("train_toy_encoder: need at least two speakers");
  for (const auto& [spk, n] : counts) {
    if (n < 10) logger()->warn("train_toy_encoder: speaker {} has only {} clips", spk, n);
  }
  int next = 0;
  for (auto& [spk, id] : ids) id = next++;
  const int n_classes = next;

  ToySpeakerEncoder enc(config.arch, stft, derive_seed(config.seed, "encoder.init"));
  const int dim = config.arch.dim;
  nn::Param classes("enc.classes", {n_classes, dim});
  {
    Rng rng(derive_seed(config.seed, "encoder.classes"));
    init_uniform(classes, rng, 1.0);
  }

  struct Item {
    std::vector<double> feats;
    int frames = 0;
    int label = 0;
    double power = 0.0;
  };
  std::vector<Item> items;
  items.reserve(corpus.size());
  for (const auto& c : corpus) {
    Item it;
    it.feats = enc.features(c.wave, it.frames);
    it.label = ids.at(c.speaker);
    for (double v : c.wave.samples) it.power += v * v;
    it.power /= static_cast<double>(std::max<std::size_t>(c.wave.size(), 1));
    items.push_back(std::move(it));
  }

  auto params = enc.parameters();
  params.push_back(&classes);
  nn::Adam adam(params, {.lr = config.learning_rate});
  Rng rng(derive_seed(config.seed, "encoder.train"));
  std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = config.scale;
  Item noisy;

  for (int step = 0; step < config.steps; ++step) {
    adam.zero_grad();
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const std::size_t idx = pick(rng);
      const Item* src = &items[idx];
      if (unit(rng) < config.noise_prob) {
        const double snr = config.snr_db_min + (config.snr_db_max - config.snr_db_min) * unit(rng);
        const double sd = std::sqrt(src->power / std::pow(10.0, snr / 10.0));
        audio::Waveform w = corpus[idx].wave;
        for (auto& v : w.samples) v += sd * normal(rng);
        noisy.feats = enc.features(w, noisy.frames);
        noisy.label = src->label;
        src = &noisy;
      }
      const Item& it = *src;
      std::vector<double> hidden;
      const auto raw = enc.project(it.feats, it.frames, &hidden);
      const Eigen::Map<const Eigen::VectorXd> e(raw.data(), dim);
      const double en = e.norm();
      const Eigen::VectorXd u = e / en;
      MatD w = Eigen::Map<const MatF>(classes.value.data(), n_classes, dim).cast<double>();
      const Eigen::VectorXd wn = w.rowwise().norm();
      MatD c = w;
      for (int k = 0; k < n_classes; ++k) c.row(k) /= wn(k);
      Eigen::VectorXd logits = s * (c * u);
      const double mx = logits.maxCoeff();
      Eigen::VectorXd p = (logits.array() - mx).exp();
      const double z = p.sum();
      p /= z;
      loss += -std::log(std::max(p(it.label), 1e-300));
      Eigen::VectorXd dlogit = p;
      dlogit(it.label) -= 1.0;
      const Eigen::VectorXd du = s * c.transpose() * dlogit;
      const Eigen::VectorXd de = (du - u * u.dot(du)) / en;
      for (int k = 0; k < n_classes; ++k) {
        const Eigen::VectorXd dc = s * dlogit(k) * u;
        const Eigen::VectorXd ck = c.row(k).transpose();
        const Eigen::VectorXd dw = (dc - ck * ck.dot(dc)) / wn(k);
        for (int j = 0; j < dim; ++j) classes.grad[k * dim + j] += static_cast<float>(dw(j));
      }
      enc.backward(it.feats, it.frames, hidden, {de.data(), static_cast<std::size_t>(dim)});
    }
    adam.step(1.0 / config.batch_size);
    if ((step + 1) % 50 == 0) {
      logger()->debug("encoder step {} loss {:.4f}", step + 1, loss / config.batch_size);
    }
  }
  return enc;
}

void save_encoder(const std::filesystem::path& path, ToySpeakerEncoder& encoder) {
  const auto& stft = encoder.stft_config();
  nn::write_container(path, {{"format", "vpure.speaker_encoder"},
                             {"version", 1},
                             {"arch", encoder.arch().to_json()},
                             {"stft", {{"window_size", stft.window_size}, {"hop_length", stft.hop_length}}},
                             {"stft_fingerprint", stft.fingerprint()},
                             {"params", nn::params_to_json(encoder.parameters())}});
}

ToySpeakerEncoder load_encoder(const std::filesystem::path& path,
                               const audio::SpectrogramConfig& expected_stft) {
  const auto doc = nn::read_container(path, "vpure.speaker_encoder", 1);
  if (doc.at("stft_fingerprint").get<std::string>() != expected_stft.fingerprint()) {
    throw Error(ErrorKind::kCheckpointMismatch, path.string() + ": encoder STFT config differs");
  }
  ToySpeakerEncoder enc(EncoderArch::from_json(doc.at("arch")), expected_stft);
  nn::params_from_json(doc.at("params"), enc.parameters());
  return enc;
}

}  // namespace vpure::protect
