// dctse: command-line front end for the DCT-domain enhancement pipeline.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dctse/audio_io.hpp"
#include "dctse/checkpoint.hpp"
#include "dctse/errors.hpp"
#include "dctse/evaluation.hpp"
#include "dctse/masking.hpp"
#include "dctse/mixing.hpp"
#include "dctse/spectral.hpp"
#include "dctse/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dctse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitMalformed = 3;
constexpr int kExitNumerical = 4;

constexpr const char* kConfigDirEnv = "DCTSE_CONFIG_DIR";

struct RunRecord {
  std::string command;
  json config = json::object();
  json inputs = json::array();
  json outputs = json::array();

  void input(const fs::path& p) { inputs.push_back({{"path", p.string()}, {"fnv1a64", file_digest(p)}}); }
  void output(const fs::path& p) { outputs.push_back({{"path", p.string()}, {"fnv1a64", file_digest(p)}}); }

  json to_json() const {
    return {{"tool", "dctse"}, {"command", command}, {"config", config}, {"inputs", inputs}, {"outputs", outputs}};
  }

  // <output>.manifest.json
  void write_beside(const fs::path& out) const {
    fs::path m = out;
    m += ".manifest.json";
    std::ofstream f(m);
    if (!f) throw std::runtime_error("cannot write run manifest '" + m.string() + "'");
    f << to_json().dump(2) << '\n';
  }
};

json read_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw MalformedInput("cannot open '" + p.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw MalformedInput("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

// A bare name is looked up in $DCTSE_CONFIG_DIR (with or without ".json");
// with no name, $DCTSE_CONFIG_DIR/default.json is used if present.
std::optional<fs::path> resolve_config(const std::string& name) {
  const char* dir = std::getenv(kConfigDirEnv);
  if (name.empty()) {
    if (dir && fs::exists(fs::path(dir) / "default.json")) return fs::path(dir) / "default.json";
    return std::nullopt;
  }
  if (fs::exists(name)) return fs::path(name);
  if (dir) {
    for (const auto& cand : {fs::path(dir) / name, fs::path(dir) / (name + ".json")})
      if (fs::exists(cand)) return cand;
  }
  throw InvalidArgument("config '" + name + "' not found (also searched $" + kConfigDirEnv + ")");
}

FrameConfig frames_from_flags(const std::string& pad) {
  FrameConfig cfg;
  if (pad == "none")
    cfg.padding = EdgePadding::none;
  else if (pad != "reflect")
    throw InvalidArgument("--pad must be 'reflect' or 'none'");
  return cfg;
}

void write_csv(const fs::path& path, const RealSpectrogram& spec) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << std::setprecision(17);
  for (std::size_t b = 0; b < spec.bins; ++b) {
    for (std::size_t t = 0; t < spec.frames; ++t) {
      if (t) f << ',';
      f << spec.at(b, t);
    }
    f << '\n';
  }
}

Model<float> model_from_checkpoint(const fs::path& path) {
  auto ckpt = load_checkpoint(path);
  return Model<float>(ckpt.unet, std::move(ckpt.params), ckpt.frames);
}

int cmd_analyze(const fs::path& in, const fs::path& out, const std::string& pad) {
  const auto cfg = frames_from_flags(pad);
  const auto x = read_wav(in);
  const auto spec = SpectralPipeline(cfg).analyze(x);
  write_csv(out, spec);
  RunRecord r{"analyze"};
  r.config = {{"frames", frame_config_to_json(cfg)}, {"bins", spec.bins}, {"columns", spec.frames}};
  r.input(in);
  r.output(out);
  r.write_beside(out);
  return kExitOk;
}

int cmd_resynth(const fs::path& in, const fs::path& out, const std::string& pad) {
  const auto cfg = frames_from_flags(pad);
  const auto x = read_wav(in);
  const SpectralPipeline pipe(cfg);
  write_wav(out, pipe.synthesize(pipe.analyze(x)));
  RunRecord r{"resynth"};
  r.config = {{"frames", frame_config_to_json(cfg)}};
  r.input(in);
  r.output(out);
  r.write_beside(out);
  return kExitOk;
}

int cmd_mix(const fs::path& clean_p, const fs::path& noise_p, const fs::path& out, double snr, std::uint64_t seed) {
  const auto clean = read_wav(clean_p);
  auto noise = read_wav(noise_p);
  if (noise.sample_rate != clean.sample_rate) noise = resample(noise, clean.sample_rate);
  const auto mix = mix_at_snr(clean, noise, snr, seed);
  write_wav(out, mix.noisy);
  RunRecord r{"mix"};
  r.config = {{"snr_db", snr}, {"seed", seed}, {"noise_gain", mix.gain},
              {"measured_snr_db", 10.0 * std::log10(signal_power(clean) / signal_power(mix.scaled_noise))}};
  r.input(clean_p);
  r.input(noise_p);
  r.output(out);
  r.write_beside(out);
  return kExitOk;
}

int cmd_noise(const fs::path& out, const std::string& color, double seconds, std::uint64_t seed, double rate) {
  if (!(seconds > 0.0)) throw InvalidArgument("--seconds must be positive");
  NoiseSpec spec;
  spec.color = parse_noise_color(color);
  spec.length = static_cast<std::size_t>(std::llround(seconds * rate));
  spec.seed = seed;
  spec.sample_rate = rate;
  const auto noise = colored_noise(spec);
  // Unit RMS does not fit PCM16; the file holds a peak-0.5 copy.
  write_wav(out, normalize_amplitude(noise));
  RunRecord r{"noise"};
  r.config = {{"color", to_string(spec.color)}, {"samples", spec.length}, {"seed", seed}, {"sample_rate", rate},
              {"rms_before_scaling", std::sqrt(signal_power(noise))},
              {"psd_slope_db_per_octave", estimate_psd_slope(noise)}};
  r.output(out);
  r.write_beside(out);
  return kExitOk;
}

struct TrainFlags {
  fs::path manifest;
  fs::path ckpt_out;
  std::string config;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> segment;
  std::optional<std::string> loss;
  std::optional<fs::path> resume;
  std::string split = "train";
};

// One record per line: {"clean": path, "noise": path, "snr_db": x, "split": s}.
// Relative paths are taken from the manifest's directory.
std::vector<TrainingPair> load_training_set(const fs::path& manifest, const std::string& split, std::uint64_t seed,
                                            RunRecord& record) {
  std::ifstream f(manifest);
  if (!f) throw MalformedInput("cannot open manifest '" + manifest.string() + "'");
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  std::vector<TrainingPair> out;
  std::string line;
  std::size_t lineno = 0, index = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedInput("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.contains("clean") || !rec.contains("noise") || !rec.contains("snr_db"))
      throw MalformedInput("manifest line " + std::to_string(lineno) + ": needs clean, noise and snr_db");
    const std::string rec_split = rec.value("split", std::string("train"));
    if (rec_split != split) continue;
    const auto clean_p = resolve(rec["clean"].get<std::string>());
    const auto noise_p = resolve(rec["noise"].get<std::string>());
    const auto clean = load_utterance(clean_p);
    const auto noise = resample(read_wav(noise_p), clean.sample_rate);
    auto mix = mix_at_snr(clean, noise, rec["snr_db"].get<double>(), seed * 1000003ULL + index++);
    // Peak-normalize the mixture and carry the same factor to the target.
    double peak = 0.0;
    for (double v : mix.noisy.samples) peak = std::max(peak, std::abs(v));
    TrainingPair pair{clean, mix.noisy};
    if (peak > 0.0) {
      const double g = 0.5 / peak;
      for (auto& v : pair.clean.samples) v *= g;
      for (auto& v : pair.noisy.samples) v *= g;
    }
    out.push_back(std::move(pair));
    record.input(clean_p);
    record.input(noise_p);
  }
  if (out.empty()) throw MalformedInput("manifest has no records in split '" + split + "'");
  return out;
}

int cmd_train(const TrainFlags& fl) {
  RunRecord record{"train"};
  record.input(fl.manifest);

  nn::UNetConfig unet = nn::UNetConfig::default_config();
  FrameConfig frames;
  TrainConfig train;
  AdamOptions adam_opts;
  std::optional<Checkpoint> resumed;

  if (const auto cfg_path = resolve_config(fl.config)) {
    const auto j = read_json_file(*cfg_path);
    try {
      if (j.contains("unet")) unet = nn::UNetConfig::from_json(j["unet"]);
      if (j.contains("frames")) frames = frame_config_from_json(j["frames"]);
      if (j.contains("train")) train = train_config_from_json(j["train"]);
      if (j.contains("adam")) {
        const auto& a = j["adam"];
        adam_opts.learning_rate = a.value("learning_rate", adam_opts.learning_rate);
        adam_opts.beta1 = a.value("beta1", adam_opts.beta1);
        adam_opts.beta2 = a.value("beta2", adam_opts.beta2);
        adam_opts.epsilon = a.value("epsilon", adam_opts.epsilon);
      }
    } catch (const json::exception& e) {
      throw MalformedInput("config '" + cfg_path->string() + "': " + e.what());
    }
    record.input(*cfg_path);
  }
  if (fl.resume) {
    resumed = load_checkpoint(*fl.resume);
    unet = resumed->unet;
    frames = resumed->frames;
    if (resumed->train) train = *resumed->train;
    if (resumed->adam) adam_opts = resumed->adam->options;
    record.input(*fl.resume);
  }
  if (fl.epochs) train.epochs = *fl.epochs;
  if (fl.seed) train.seed = *fl.seed;
  if (fl.batch) train.batch_size = *fl.batch;
  if (fl.segment) train.segment_len = *fl.segment;
  if (fl.loss) train.loss = parse_loss_kind(*fl.loss);
  if (fl.lr) adam_opts.learning_rate = *fl.lr;
  unet.validate();
  frames.validate();
  train.validate();
  adam_opts.validate();

  const auto dataset = load_training_set(fl.manifest, fl.split, train.seed, record);

  std::optional<Model<float>> model;
  AdamState<float> adam;
  std::uint64_t first_epoch = 0;
  if (resumed) {
    model.emplace(unet, std::move(resumed->params), frames);
    adam = resumed->adam ? std::move(*resumed->adam) : AdamState<float>(model->params.values().size(), adam_opts);
    adam.options = adam_opts;
    first_epoch = resumed->epoch;
  } else {
    model.emplace(unet, frames, train.seed);
    adam = AdamState<float>(model->params.values().size(), adam_opts);
  }

  json log = json::array();
  for (std::uint64_t e = first_epoch; e < first_epoch + train.epochs; ++e) {
    const auto m = train_epoch(*model, std::span<const TrainingPair>(dataset), train, adam, e);
    const json entry = {{"epoch", e + 1}, {"mean_loss", m.mean_loss}, {"steps", m.steps}, {"aborted", m.aborted}};
    std::cout << entry.dump() << std::endl;
    log.push_back(entry);
  }

  Checkpoint ckpt;
  ckpt.unet = unet;
  ckpt.frames = frames;
  ckpt.params = model->params;
  ckpt.seed = train.seed;
  ckpt.step = adam.step;
  ckpt.epoch = first_epoch + train.epochs;
  ckpt.train = train;
  ckpt.adam = adam;
  save_checkpoint(fl.ckpt_out, ckpt);

  record.config = {{"unet", unet.to_json()},
                   {"frames", frame_config_to_json(frames)},
                   {"train", train_config_to_json(train)},
                   {"adam", {{"learning_rate", adam_opts.learning_rate},
                             {"beta1", adam_opts.beta1},
                             {"beta2", adam_opts.beta2},
                             {"epsilon", adam_opts.epsilon}}},
                   {"split", fl.split},
                   {"pairs", dataset.size()},
                   {"first_epoch", first_epoch},
                   {"epochs_log", log}};
  record.output(fl.ckpt_out);
  record.write_beside(fl.ckpt_out);
  return kExitOk;
}

int cmd_enhance(const fs::path& ckpt_p, const fs::path& in, const fs::path& out) {
  auto model = model_from_checkpoint(ckpt_p);
  auto x = read_wav(in);
  if (x.sample_rate != model.pipeline.config().sample_rate) x = resample(x, model.pipeline.config().sample_rate);
  const auto y = enhance(model, x);
  for (double v : y.samples)
    if (!std::isfinite(v)) throw NumericalError("enhance: non-finite output sample");
  write_wav(out, y);
  RunRecord r{"enhance"};
  r.config = {{"unet", model.unet.to_json()}, {"frames", frame_config_to_json(model.pipeline.config())}};
  r.input(ckpt_p);
  r.input(in);
  r.output(out);
  r.write_beside(out);
  return kExitOk;
}

int cmd_eval(const fs::path& ref_p, const fs::path& est_p, const std::optional<fs::path>& out, std::size_t seg) {
  const auto ref = read_wav(ref_p);
  const auto est = read_wav(est_p);
  if (ref.size() != est.size()) throw InvalidArgument("eval: reference and estimate lengths differ");
  if (ref.sample_rate != est.sample_rate) throw InvalidArgument("eval: sample rates differ");
  const auto report = evaluate(ref.samples, est.samples, seg).to_json();
  RunRecord r{"eval"};
  r.config = {{"segment_len", seg}};
  r.input(ref_p);
  r.input(est_p);
  if (out) {
    std::ofstream f(*out);
    if (!f) throw std::runtime_error("cannot write '" + out->string() + "'");
    f << report.dump(2) << '\n';
    f.close();
    r.output(*out);
    r.write_beside(*out);
    std::cout << report.dump(2) << '\n';
  } else {
    json j = report;
    j["run"] = r.to_json();
    std::cout << j.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_multinoise(const fs::path& clean_p, const std::optional<fs::path>& ckpt_p, std::uint64_t seed, double snr,
                   const fs::path& out, const std::optional<fs::path>& noisy_out) {
  const auto clean = load_utterance(clean_p);
  std::optional<Model<float>> model;
  Enhancer enh;
  if (ckpt_p) {
    model.emplace(model_from_checkpoint(*ckpt_p));
    enh = [&](const Waveform& x) { return enhance(*model, x); };
  }
  const auto rep = multi_noise_experiment(clean, enh, seed, snr);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write '" + out.string() + "'");
  f << rep.to_json().dump(2) << '\n';
  f.close();
  RunRecord r{"multinoise"};
  r.config = {{"seed", seed}, {"snr_db", snr}, {"wiener_frames", frame_config_to_json(wiener_frame_config())}};
  r.input(clean_p);
  if (ckpt_p) r.input(*ckpt_p);
  r.output(out);
  if (noisy_out) {
    write_wav(*noisy_out, rep.noisy);
    r.output(*noisy_out);
  }
  r.write_beside(out);
  std::cout << rep.to_json().dump(2) << '\n';
  return kExitOk;
}

int cmd_oracle(const fs::path& clean_p, const fs::path& noisy_p, const fs::path& out) {
  const auto clean = read_wav(clean_p);
  const auto noisy = read_wav(noisy_p);
  const FrameConfig cfg;
  write_wav(out, oracle_enhance(clean, noisy, cfg));
  RunRecord r{"oracle"};
  r.config = {{"frames", frame_config_to_json(cfg)}, {"eps", kOracleEps}, {"bound", MaskParams{}.bound}};
  r.input(clean_p);
  r.input(noisy_p);
  r.output(out);
  r.write_beside(out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DCT-domain speech enhancement toolkit"};
  app.require_subcommand(1);

  std::string in, out, in2, ckpt, pad = "none";
  double snr = 0.0, seconds = 1.0, rate = 16000.0;
  std::uint64_t seed = 0;
  std::string color = "white";
  std::size_t seg = 256;
  std::optional<std::string> opt_out, opt_ckpt, opt_noisy_out;

  auto* analyze = app.add_subcommand("analyze", "DCT spectrogram of a WAV file as CSV (one row per bin)");
  analyze->add_option("input", in, "input WAV")->required();
  analyze->add_option("output", out, "output CSV")->required();
  analyze->add_option("--pad", pad, "edge padding: none or reflect")->capture_default_str();

  auto* resynth = app.add_subcommand("resynth", "analyze then synthesize (identity path)");
  resynth->add_option("input", in, "input WAV")->required();
  resynth->add_option("output", out, "output WAV")->required();
  std::string resynth_pad = "reflect";
  resynth->add_option("--pad", resynth_pad, "edge padding: none or reflect")->capture_default_str();

  auto* mix = app.add_subcommand("mix", "mix clean speech with noise at a given SNR");
  mix->add_option("clean", in, "clean WAV")->required();
  mix->add_option("noise", in2, "noise WAV")->required();
  mix->add_option("output", out, "output WAV")->required();
  mix->add_option("--snr", snr, "SNR in dB")->required();
  mix->add_option("--seed", seed, "crop/tiling seed")->capture_default_str();

  auto* noise = app.add_subcommand("noise", "colored noise generator");
  noise->add_option("output", out, "output WAV")->required();
  noise->add_option("--color", color, "white, pink, blue or violet")->capture_default_str();
  noise->add_option("--seconds", seconds, "duration")->capture_default_str();
  noise->add_option("--seed", seed, "generator seed")->capture_default_str();
  noise->add_option("--rate", rate, "sample rate")->capture_default_str();

  TrainFlags tf;
  std::size_t epochs = 0, batch = 0, segment = 0;
  std::uint64_t train_seed = 0;
  double lr = 0.0;
  std::string loss, resume;
  auto* train = app.add_subcommand("train", "train the mask U-net from a JSONL manifest");
  train->add_option("manifest", tf.manifest, "JSON-lines manifest")->required();
  train->add_option("checkpoint", tf.ckpt_out, "output checkpoint")->required();
  train->add_option("--config", tf.config, "config JSON (path or name in $DCTSE_CONFIG_DIR)");
  auto* o_epochs = train->add_option("--epochs", epochs, "number of epochs");
  auto* o_seed = train->add_option("--seed", train_seed, "seed for init, mixing and batching");
  auto* o_lr = train->add_option("--lr", lr, "Adam learning rate");
  auto* o_batch = train->add_option("--batch", batch, "batch size");
  auto* o_segment = train->add_option("--segment", segment, "training crop length in samples");
  auto* o_loss = train->add_option("--loss", loss, "wsdr or neg_sdr");
  auto* o_resume = train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_option("--split", tf.split, "manifest split to use")->capture_default_str();

  auto* enh = app.add_subcommand("enhance", "enhance a WAV file with a trained checkpoint");
  enh->add_option("checkpoint", ckpt, "checkpoint")->required();
  enh->add_option("input", in, "noisy WAV")->required();
  enh->add_option("output", out, "enhanced WAV")->required();

  auto* eval = app.add_subcommand("eval", "SI-SDR and segmental SNR of an estimate");
  eval->add_option("reference", in, "reference WAV")->required();
  eval->add_option("estimate", in2, "estimate WAV")->required();
  eval->add_option("--out", opt_out, "write the JSON report here");
  eval->add_option("--segment", seg, "segment length for segmental SNR")->capture_default_str();

  auto* multi = app.add_subcommand("multinoise", "sequential blue/pink/violet/white noise experiment");
  multi->add_option("clean", in, "clean WAV (at least 4 s)")->required();
  multi->add_option("checkpoint", opt_ckpt, "model checkpoint (optional)");
  multi->add_option("--seed", seed, "noise seed")->capture_default_str();
  double multi_snr = 10.0;
  multi->add_option("--snr", multi_snr, "per-segment SNR in dB")->capture_default_str();
  multi->add_option("--out", out, "JSON report")->required();
  multi->add_option("--noisy-out", opt_noisy_out, "also write the noisy mixture");

  auto* oracle = app.add_subcommand("oracle", "apply the oracle ratio mask and resynthesize");
  oracle->add_option("clean", in, "clean WAV")->required();
  oracle->add_option("noisy", in2, "noisy WAV")->required();
  oracle->add_option("output", out, "output WAV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*analyze) return cmd_analyze(in, out, pad);
    if (*resynth) return cmd_resynth(in, out, resynth_pad);
    if (*mix) return cmd_mix(in, in2, out, snr, seed);
    if (*noise) return cmd_noise(out, color, seconds, seed, rate);
    if (*train) {
      if (*o_epochs) tf.epochs = epochs;
      if (*o_seed) tf.seed = train_seed;
      if (*o_lr) tf.lr = lr;
      if (*o_batch) tf.batch = batch;
      if (*o_segment) tf.segment = segment;
      if (*o_loss) tf.loss = loss;
      if (*o_resume) tf.resume = fs::path(resume);
      return cmd_train(tf);
    }
    if (*enh) return cmd_enhance(ckpt, in, out);
    if (*eval) return cmd_eval(in, in2, opt_out ? std::optional<fs::path>(*opt_out) : std::nullopt, seg);
    if (*multi)
      return cmd_multinoise(in, opt_ckpt ? std::optional<fs::path>(*opt_ckpt) : std::nullopt, seed, multi_snr, out,
                            opt_noisy_out ? std::optional<fs::path>(*opt_noisy_out) : std::nullopt);
    if (*oracle) return cmd_oracle(in, in2, out);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const MalformedInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMalformed;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitInvalid;
}
