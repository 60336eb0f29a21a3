#include "vpure/cli/cli.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <sstream>

#include "common.hpp"
#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"
#include "vpure/common/log.hpp"
#include "vpure/eval/metrics.hpp"

namespace vpure::cli {

void Context::set_output(const fs::path& o, bool is_dir) {
  const auto abs = fs::absolute(o).lexically_normal();
  manifest.output = abs.string();
  manifest.output_dir = is_dir ? abs.string() : abs.parent_path().string();
  fs::create_directories(manifest.output_dir);
}

void Context::write_output(const fs::path& p, const std::string& text) {
  write_text_file(p, text);
  add_output(p);
}

void Context::write_wav_output(const fs::path& p, const audio::Waveform& w) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  audio::write_wav(p, w);
  add_output(p);
}

fs::path Context::manifest_path() const {
  const fs::path o(manifest.output);
  if (manifest.output == manifest.output_dir) return o / pipeline::kManifestName;
  return fs::path(manifest.output + "." + pipeline::kManifestName);
}

StageTimer::StageTimer(Context& ctx, std::string stage)
    : ctx_(ctx), stage_(std::move(stage)), t0_(std::chrono::steady_clock::now()) {}

StageTimer::~StageTimer() {
  ctx_.manifest.timings[stage_] +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
}

std::vector<ClipFile> list_wavs(const fs::path& p) {
  std::vector<ClipFile> out;
  if (fs::is_regular_file(p)) {
    out.push_back({p.stem().string(), p});
  } else if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back({e.path().stem().string(), e.path()});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  } else {
    throw Error(ErrorKind::kData, "no such file or directory: " + p.string());
  }
  if (out.empty()) throw Error(ErrorKind::kData, "no .wav files in " + p.string());
  return out;
}

std::vector<audio::Waveform> read_clips(Context& ctx, const std::vector<ClipFile>& files) {
  std::vector<audio::Waveform> out;
  for (const auto& f : files) {
    out.push_back(audio::read_wav(f.path));
    ctx.add_input(f.path);
  }
  return out;
}

std::string speaker_of(const std::string& id) { return id.substr(0, id.find('_')); }

phoneme::AlignedTranscript load_alignment(Context& ctx, const fs::path& dir, const std::string& id) {
  for (const char* ext : {".json", ".TextGrid"}) {
    const auto p = dir / (id + ext);
    if (fs::exists(p)) {
      ctx.add_input(p);
      return phoneme::parse_alignment(p);
    }
  }
  throw Error(ErrorKind::kData, "no alignment for '" + id + "' in " + dir.string());
}

std::map<std::string, audio::Waveform> load_enrollment(Context& ctx, const fs::path& dir) {
  std::map<std::string, audio::Waveform> out;
  for (const auto& f : list_wavs(dir)) {
    out[f.id] = audio::read_wav(f.path);
    ctx.add_input(f.path);
  }
  return out;
}

LoadedPurifier load_purifier_checked(Context& ctx, const fs::path& path) {
  ctx.add_input(path);
  auto ck = diffusion::load_purifier(path);
  const auto expected = ctx.config.schedule.build();
  if (ck.schedule.fingerprint() != expected.fingerprint()) {
    throw Error(ErrorKind::kCheckpointMismatch,
                fmt::format("{}: trained with a {}-step schedule ({} to {}), configured {} steps ({} to {})",
                            path.string(), ck.schedule.t_max(), ck.schedule.beta_start,
                            ck.schedule.beta_end, expected.t_max(), expected.beta_start,
                            expected.beta_end));
  }
  ctx.manifest.fingerprints["purifier_schedule"] = ck.schedule.fingerprint();
  return {std::move(ck.model), std::move(ck.schedule)};
}

refiner::RefinerCheckpoint load_refiner_checked(Context& ctx, const fs::path& path,
                                                const phoneme::PhonemeDictionary& dict) {
  ctx.add_input(path);
  auto ck = refiner::load_refiner(path, ctx.config.stft);
  if (ck.params.to_json() != ctx.config.sde.to_json()) {
    throw Error(ErrorKind::kCheckpointMismatch,
                path.string() + ": SDE parameters differ from the configuration (" +
                    ck.params.to_json().dump() + " vs " + ctx.config.sde.to_json().dump() + ")");
  }
  if (ck.dictionary_fingerprint != dict.fingerprint()) {
    throw Error(ErrorKind::kCheckpointMismatch,
                path.string() + ": trained with dictionary " + ck.dictionary_fingerprint +
                    ", given " + dict.fingerprint());
  }
  ctx.manifest.fingerprints["refiner_stft"] = ctx.config.stft.fingerprint();
  return ck;
}

phoneme::PhonemeDictionary load_dictionary_checked(Context& ctx, const fs::path& path) {
  ctx.add_input(path);
  auto dict = phoneme::load_dictionary(path);
  if (!(dict.config == ctx.config.stft)) {
    throw Error(ErrorKind::kCheckpointMismatch,
                fmt::format("{}: built with STFT window {}, configured window {}", path.string(),
                            dict.config.window_size, ctx.config.stft.window_size));
  }
  ctx.manifest.fingerprints["dictionary"] = dict.fingerprint();
  return dict;
}

protect::ToySpeakerEncoder load_encoder_checked(Context& ctx, const fs::path& path) {
  ctx.add_input(path);
  auto enc = protect::load_encoder(path, ctx.config.stft);
  ctx.manifest.fingerprints["encoder"] = sha256_file(path).substr(0, 16);
  return enc;
}

double resolve_threshold(Context& ctx, std::optional<double> threshold, const std::string& eer_from) {
  if (threshold) return *threshold;
  if (eer_from.empty()) return ctx.config.threshold;
  ctx.add_input(eer_from);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(eer_from));
    const auto g = j.at("genuine").get<std::vector<double>>();
    const auto i = j.at("impostor").get<std::vector<double>>();
    const double t = eval::eer_threshold(g, i).threshold;
    ctx.manifest.metrics["eer_threshold"] = t;
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kData, eer_from + ": expected genuine and impostor score arrays (" + e.what() + ")");
  }
}

namespace {

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kCheckpointMismatch: return kExitCheckpointMismatch;
    case ErrorKind::kState: return kExitFailure;
    default: return kExitData;
  }
}

struct Preprocessed {
  std::string config_path;
  std::vector<std::string> recorded;  // without --config and -o, paths absolute
};

Preprocessed preprocess(const std::vector<std::string>& args) {
  Preprocessed p;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      p.config_path = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      p.config_path = a.substr(9);
    } else if ((a == "-o" || a == "--out") && i + 1 < args.size()) {
      ++i;
    } else if (a.rfind("--out=", 0) == 0) {
    } else if (i > 0 && !a.empty() && a[0] != '-' && fs::exists(a)) {
      p.recorded.push_back(fs::absolute(a).lexically_normal().string());
    } else {
      p.recorded.push_back(a);
    }
  }
  return p;
}

void add_reproduce_command(CLI::App& app, Action& action, std::ostream& err) {
  auto* sub = app.add_subcommand("reproduce", "Re-run a recorded command and compare its outputs");
  auto manifest = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  sub->add_option("manifest", *manifest, "manifest.json of the run to repeat")->required();
  sub->add_option("-o,--out", *out, "Directory for the repeated run")->required();
  sub->callback([&action, &err, manifest, out] {
    action = [&err, manifest, out](Context& ctx) {
      const auto m = pipeline::RunManifest::load(*manifest);
      for (const auto& in : m.inputs) {
        if (!fs::exists(in.path) || sha256_file(in.path) != in.sha256) {
          throw Error(ErrorKind::kData, "input changed since the recorded run: " + in.path);
        }
      }
      const fs::path dir = fs::absolute(*out);
      fs::create_directories(dir);
      const auto cfg_path = dir / ".reproduce_config.json";
      write_text_file(cfg_path, m.config.dump(2));
      std::vector<std::string> args{m.command};
      args.insert(args.end(), m.args.begin() + 1, m.args.end());
      args.push_back("--config");
      args.push_back(cfg_path.string());
      args.push_back("-o");
      const bool is_dir = m.output == m.output_dir;
      const fs::path new_out = is_dir ? dir : dir / fs::path(m.output).filename();
      args.push_back(new_out.string());
      std::ostringstream sink;
      const int code = run_cli(args, sink, err);
      if (code != kExitOk) throw Error(ErrorKind::kState, fmt::format("repeated run exited with {}", code));

      ctx.set_output(dir / "reproduce", true);
      nlohmann::json diffs = nlohmann::json::array();
      for (const auto& o : m.outputs) {
        const auto p = dir / o.path;
        const std::string got = fs::exists(p) ? sha256_file(p) : std::string("missing");
        if (got != o.sha256) diffs.push_back({{"path", o.path}, {"expected", o.sha256}, {"got", got}});
      }
      ctx.manifest.metrics = {{"compared", m.outputs.size()}, {"differences", diffs},
                              {"identical", diffs.empty()}};
      ctx.write_output(dir / "reproduce" / "comparison.json", ctx.manifest.metrics.dump(2) + "\n");
      *ctx.out << fmt::format("compared {} outputs, {} differ\n", m.outputs.size(), diffs.size());
      if (!diffs.empty()) throw Error(ErrorKind::kState, "repeated run produced different outputs");
    };
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage diffusion purification of protected speech"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::size_t workers = 0;
  std::string log_level = "warn";
  app.add_option("--config", config_path, "Pipeline configuration (JSON)");
  app.add_option("--workers", workers, "Worker threads (overrides the configuration)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  Action action;
  add_data_commands(app, action);
  add_training_commands(app, action);
  add_processing_commands(app, action);
  add_report_commands(app, action);
  add_reproduce_command(app, action, err);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    logger()->set_level(spdlog::level::from_str(log_level));
    Context ctx;
    ctx.out = &out;
    ctx.config = config_path.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(config_path);
    if (workers > 0) ctx.config.workers = workers;
    ctx.config.validate();
    const auto pre = preprocess(args);
    ctx.manifest.command = args.front();
    ctx.manifest.args = pre.recorded;
    ctx.manifest.config = ctx.config.to_json();
    ctx.manifest.fingerprints["config"] = ctx.config.fingerprint();
    {
      StageTimer total(ctx, "total");
      action(ctx);
    }
    if (!ctx.manifest.output.empty()) ctx.manifest.save(ctx.manifest_path());
    return kExitOk;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace vpure::cli
