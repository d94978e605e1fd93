// parconv: drum-clip classification pipeline and fog placement simulator.
//
// Subcommands: featurize, synth-data, train, eval, classify, cost, simulate.
// Exit codes: 0 ok, 2 usage or input error, 3 runtime error (divergence,
// internal failure). Diagnostics go to stderr; --json output to stdout.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "parconv/audio_frontend.hpp"
#include "parconv/checkpoint.hpp"
#include "parconv/cost.hpp"
#include "parconv/dataset.hpp"
#include "parconv/errors.hpp"
#include "parconv/fog_sim.hpp"
#include "parconv/network.hpp"
#include "parconv/spectrogram_io.hpp"
#include "parconv/trainer.hpp"
#include "parconv/wav.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// JSON config files: top-level keys map to global options, nested objects
/// to subcommand sections ({"seed": 7, "train": {"epochs": 5}}). Flags
/// given on the command line win over the file.
class ConfigJson : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConfigError(std::string("bad JSON config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> out;
    collect(j, {}, out);
    return out;
  }

 private:
  static void collect(const json& j, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& out) {
    if (!j.is_object()) {
      throw CLI::ConfigError("config root and sections must be JSON objects");
    }
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        collect(value, std::move(nested), out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) {
          item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
      } else if (value.is_string()) {
        item.inputs.push_back(value.get<std::string>());
      } else {
        item.inputs.push_back(value.dump());
      }
      out.push_back(std::move(item));
    }
  }
};

struct GlobalOpts {
  std::uint64_t seed = 42;
  bool json_output = false;
};

std::pair<int, int> parse_hw(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    throw parconv::InvalidConfigError("expected HxW, e.g. 128x128, got \"" + s +
                                      "\"");
  }
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw parconv::InvalidConfigError("expected HxW, e.g. 128x128, got \"" + s +
                                      "\"");
  }
}

// ---------------------------------------------------------------- featurize

struct FeaturizeOpts {
  std::string in_path;
  std::string out_path;
  int frames = 0;  // 0 keeps the natural frame count
  int window = 2048;
  int hop = 512;
  bool no_center = false;
  int n_mels = 128;
  double f_min = 20.0;
  double f_max = 20000.0;
  bool log_compress = false;
};

int run_featurize(const FeaturizeOpts& o, const GlobalOpts& g) {
  parconv::StftConfig stft;
  stft.window_size = o.window;
  stft.hop_length = o.hop;
  stft.centered = !o.no_center;
  parconv::MelConfig mel;
  mel.n_mels = o.n_mels;
  mel.f_min_hz = o.f_min;
  mel.f_max_hz = o.f_max;
  mel.log_compress = o.log_compress;

  const parconv::AudioBuffer audio = parconv::read_wav(o.in_path);
  parconv::Spectrogram spec = parconv::mel_power_spectrogram(audio, stft, mel);
  if (o.frames > 0) spec = parconv::fit_frames(spec, o.frames);
  parconv::write_spectrogram(o.out_path, spec);

  if (g.json_output) {
    std::cout << json{{"out", o.out_path},
                      {"sidecar", o.out_path + ".json"},
                      {"shape", {spec.n_mels, spec.n_frames}}}
                     .dump()
              << '\n';
  } else {
    std::cout << "wrote " << o.out_path << " shape (" << spec.n_mels << ", "
              << spec.n_frames << ")\n";
  }
  return 0;
}

// ---------------------------------------------------------------- synth-data

struct SynthOpts {
  std::string out_dir;
  int per_class_train = 10;
  int per_class_val = 10;
};

int run_synth(const SynthOpts& o, const GlobalOpts& g) {
  parconv::DatasetManifest manifest = parconv::synthesize_toy_dataset(
      o.per_class_train, g.seed, o.out_dir, parconv::Split::kTrain);
  if (o.per_class_val > 0) {
    const auto val = parconv::synthesize_toy_dataset(o.per_class_val, g.seed,
                                                     o.out_dir, parconv::Split::kVal);
    manifest.entries.insert(manifest.entries.end(), val.entries.begin(),
                            val.entries.end());
  }
  const std::string manifest_path = (fs::path(o.out_dir) / "manifest.jsonl").string();
  parconv::write_manifest(manifest, manifest_path);

  if (g.json_output) {
    std::cout << json{{"manifest", manifest_path},
                      {"files", manifest.entries.size()},
                      {"per_class_train", o.per_class_train},
                      {"per_class_val", o.per_class_val}}
                     .dump()
              << '\n';
  } else {
    std::cout << "wrote " << manifest.entries.size() << " WAVs and "
              << manifest_path << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string manifest_path;
  std::string out_dir = ".";
  int epochs = 30;
  int batch = 8;
  double lr = 0.02;
  double momentum = 0.9;
  double clip = 1.0;
  int frames = 128;
  int groups = 4;
  double early_stop = 0.0;  // 0 disables
  bool raw_power = false;
};

int run_train(const TrainOpts& o, const GlobalOpts& g) {
  const parconv::DatasetManifest data = parconv::load_dataset(o.manifest_path);

  parconv::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.grad_clip_norm = o.clip;
  cfg.seed = g.seed;
  cfg.target_frames = o.frames;
  if (o.early_stop > 0.0) cfg.early_stop_val_accuracy = o.early_stop;
  if (o.raw_power) cfg.mel.log_compress = false;

  fs::create_directories(o.out_dir);
  cfg.checkpoint_path = (fs::path(o.out_dir) / "model.pcnn").string();

  parconv::NetworkSpec net_spec = parconv::NetworkSpec::standard(
      parconv::kNumClasses, o.groups);
  net_spec.input_shape = {1, cfg.mel.n_mels, cfg.target_frames};
  parconv::Model model = parconv::build_network(net_spec, g.seed);

  auto hist = data.class_histogram(parconv::Split::kTrain);
  std::cerr << "train split per-class counts:";
  for (int i = 0; i < parconv::kNumClasses; ++i) {
    std::cerr << ' ' << parconv::label_name(i) << '='
              << hist[static_cast<std::size_t>(i)];
  }
  std::cerr << '\n';

  const parconv::TrainReport report =
      parconv::train(model, data, cfg, [](const parconv::EpochStats& e) {
        std::fprintf(stderr, "epoch %d loss %.4f train_acc %.4f val_acc %.4f\n",
                     e.epoch, e.loss, e.train_accuracy, e.val_accuracy);
      });

  const std::string report_path = (fs::path(o.out_dir) / "train_report.json").string();
  std::ofstream rf(report_path, std::ios::trunc);
  if (!rf) throw parconv::IoError("cannot write " + report_path);
  rf << report.to_json() << '\n';

  std::cerr << "best epoch " << report.best_epoch << " val_acc "
            << report.best_val_accuracy << "; checkpoint " << cfg.checkpoint_path
            << '\n';
  if (g.json_output) {
    std::cout << report.to_json() << '\n';
  } else {
    std::cout << "checkpoint " << cfg.checkpoint_path << "\nreport " << report_path
              << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  std::string model_path;
  std::string manifest_path;
  std::string split = "val";
};

int run_eval(const EvalOpts& o, const GlobalOpts& g) {
  parconv::Model model = parconv::load_model(o.model_path);
  const parconv::DatasetManifest data = parconv::load_dataset(o.manifest_path);

  parconv::TrainConfig cfg;
  cfg.seed = g.seed;
  cfg.stft = model.stft_config;
  cfg.mel = model.mel_config;
  cfg.mel.n_mels = model.spec().input_shape[1];
  cfg.target_frames = model.spec().input_shape[2];

  const parconv::EvalResult r =
      parconv::evaluate(model, data, parconv::split_from_string(o.split), cfg);

  if (g.json_output) {
    std::cout << json{{"split", o.split},
                      {"top1_accuracy", r.top1},
                      {"confusion", r.confusion}}
                     .dump()
              << '\n';
    return 0;
  }
  std::printf("top1 accuracy: %.4f\n", r.top1);
  std::printf("confusion (rows = truth, cols = predicted):\n%-12s", "");
  for (int i = 0; i < parconv::kNumClasses; ++i) {
    std::printf(" %10s", parconv::label_name(i));
  }
  std::printf("\n");
  for (int i = 0; i < parconv::kNumClasses; ++i) {
    std::printf("%-12s", parconv::label_name(i));
    for (int j = 0; j < parconv::kNumClasses; ++j) {
      std::printf(" %10lld",
                  static_cast<long long>(
                      r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
    }
    std::printf("\n");
  }
  return 0;
}

// ---------------------------------------------------------------- classify

struct ClassifyOpts {
  std::string model_path;
  std::string in_path;
};

int run_classify(const ClassifyOpts& o, const GlobalOpts& g) {
  parconv::Model model = parconv::load_model(o.model_path);
  const parconv::AudioBuffer audio = parconv::read_wav(o.in_path);

  parconv::MelConfig mel = model.mel_config;
  mel.n_mels = model.spec().input_shape[1];
  const parconv::Tensor features = parconv::featurize(
      audio, model.stft_config, mel, model.spec().input_shape[2]);

  parconv::Tensor batch({1, features.dim(0), features.dim(1), features.dim(2)});
  std::copy(features.data().begin(), features.data().end(), batch.data().begin());
  const parconv::Tensor probs = parconv::ops::softmax(model.logits(batch));

  int best = 0;
  for (int i = 1; i < parconv::kNumClasses; ++i) {
    if (probs.at(0, i) > probs.at(0, best)) best = i;
  }

  if (g.json_output) {
    std::vector<double> p(parconv::kNumClasses);
    for (int i = 0; i < parconv::kNumClasses; ++i) {
      p[static_cast<std::size_t>(i)] = probs.at(0, i);
    }
    std::cout << json{{"label", parconv::label_name(best)}, {"probs", p}}.dump()
              << '\n';
    return 0;
  }
  std::printf("label: %s\n", parconv::label_name(best));
  for (int i = 0; i < parconv::kNumClasses; ++i) {
    std::printf("  %-10s %.4f\n", parconv::label_name(i), probs.at(0, i));
  }
  return 0;
}

// ---------------------------------------------------------------- cost

struct CostOpts {
  int groups = 4;
  std::string input = "128x128";
  bool no_bias = false;
};

int run_cost(const CostOpts& o, const GlobalOpts& g) {
  const auto [h, w] = parse_hw(o.input);
  parconv::NetworkSpec spec = parconv::NetworkSpec::standard(parconv::kNumClasses,
                                                             o.groups);
  spec.input_shape = {1, h, w};
  spec.bias = !o.no_bias;
  const parconv::CostReport report = parconv::cost_report(spec);
  if (g.json_output) {
    std::cout << parconv::render_json(report) << '\n';
  } else {
    std::cout << parconv::render_text(report);
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string profiles_path;
  std::string frames = "10";
  int trials = 1000;
  bool no_jitter = false;
  std::string measure_model;
  int measure_repeats = 5;
};

int run_simulate(const SimulateOpts& o, const GlobalOpts& g) {
  if (!o.measure_model.empty()) {
    parconv::Model model = parconv::load_model(o.measure_model);
    const auto shape = model.spec().input_shape;
    parconv::Tensor input({1, shape[0], shape[1], shape[2]});
    const parconv::LocalTiming t =
        parconv::measure_local(model, input, o.measure_repeats);
    const parconv::DeviceProfile p =
        parconv::profile_from_measurement("local", t, shape[2]);
    const json j{{"id", p.id},
                 {"tier", "fog"},
                 {"t_time_mean_ms", p.t_time_mean_ms},
                 {"t_time_jitter_ms", p.t_time_jitter_ms},
                 {"c_time_per_frame_ms", p.c_time_per_frame_ms},
                 {"measured_mean_ms", t.mean_ms},
                 {"measured_std_ms", t.std_ms}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  std::vector<parconv::DeviceProfile> profiles =
      o.profiles_path.empty() ? parconv::default_profiles()
                              : parconv::load_profiles(o.profiles_path);
  if (o.no_jitter) {
    for (auto& p : profiles) p.t_time_jitter_ms = 0.0;
  }

  std::vector<int> frame_list;
  std::stringstream ss(o.frames);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      frame_list.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw parconv::InvalidConfigError("bad --frames entry \"" + tok + "\"");
    }
  }
  if (frame_list.empty()) throw parconv::InvalidConfigError("--frames is empty");

  if (frame_list.size() == 1) {
    const auto ranking = parconv::rank_placements(profiles, {frame_list[0]},
                                                  g.seed, o.trials);
    std::cout << (g.json_output ? parconv::render_ranking_json(ranking) + "\n"
                                : parconv::render_ranking_text(ranking));
  } else {
    const auto table =
        parconv::sweep_frames(profiles, frame_list, g.seed, o.trials);
    std::cout << (g.json_output ? parconv::render_sweep_json(table) + "\n"
                                : parconv::render_sweep_text(table));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drum-clip classification pipeline and fog placement simulator"};
  app.set_version_flag("--version", "parconv 0.1.0");
  app.config_formatter(std::make_shared<ConfigJson>());
  app.set_config("--config", "", "JSON config mirroring the flags");
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed")->capture_default_str();
  app.add_flag("--json", g.json_output, "machine-readable output on stdout");

  FeaturizeOpts fo;
  CLI::App* feat = app.add_subcommand("featurize", "WAV to Mel power spectrogram");
  feat->add_option("--in", fo.in_path, "input WAV")->required();
  feat->add_option("--out", fo.out_path, "output binary path")->required();
  feat->add_option("--frames", fo.frames, "crop/pad to this frame count");
  feat->add_option("--window", fo.window, "STFT window size")->capture_default_str();
  feat->add_option("--hop", fo.hop, "STFT hop length")->capture_default_str();
  feat->add_flag("--no-center", fo.no_center, "disable centered framing");
  feat->add_option("--n-mels", fo.n_mels, "Mel bands")->capture_default_str();
  feat->add_option("--f-min", fo.f_min, "low cutoff Hz")->capture_default_str();
  feat->add_option("--f-max", fo.f_max, "high cutoff Hz")->capture_default_str();
  feat->add_flag("--log", fo.log_compress, "log-compress the output");

  SynthOpts so;
  CLI::App* synth = app.add_subcommand("synth-data", "generate the toy drum set");
  synth->add_option("--out", so.out_dir, "output directory")->required();
  synth->add_option("--per-class-train", so.per_class_train, "train WAVs per class")
      ->capture_default_str();
  synth->add_option("--per-class-val", so.per_class_val, "val WAVs per class")
      ->capture_default_str();

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "train the classifier");
  train->add_option("--manifest", to.manifest_path, "JSONL dataset manifest")
      ->required();
  train->add_option("--out", to.out_dir, "output directory")->capture_default_str();
  train->add_option("--epochs", to.epochs)->capture_default_str();
  train->add_option("--batch", to.batch)->capture_default_str();
  train->add_option("--lr", to.lr)->capture_default_str();
  train->add_option("--momentum", to.momentum)->capture_default_str();
  train->add_option("--clip", to.clip, "gradient norm clip, 0 disables")
      ->capture_default_str();
  train->add_option("--frames", to.frames, "input frame count")->capture_default_str();
  train->add_option("--g", to.groups, "group size")->capture_default_str();
  train->add_option("--early-stop", to.early_stop,
                    "stop at this val accuracy (0 disables)")
      ->capture_default_str();
  train->add_flag("--raw-power", to.raw_power, "train on raw power features");

  EvalOpts eo;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--model", eo.model_path, "checkpoint")->required();
  ev->add_option("--manifest", eo.manifest_path, "JSONL dataset manifest")->required();
  ev->add_option("--split", eo.split, "train or val")->capture_default_str();

  ClassifyOpts co;
  CLI::App* cls = app.add_subcommand("classify", "classify one WAV");
  cls->add_option("--model", co.model_path, "checkpoint")->required();
  cls->add_option("--in", co.in_path, "input WAV")->required();

  CostOpts cso;
  CLI::App* cost = app.add_subcommand("cost", "analytic cost report");
  cost->add_option("--g", cso.groups, "group size")->capture_default_str();
  cost->add_option("--input", cso.input, "input size HxW")->capture_default_str();
  cost->add_flag("--no-bias", cso.no_bias, "exclude bias parameters");

  SimulateOpts sim;
  CLI::App* simc = app.add_subcommand("simulate", "cloud vs fog placement timing");
  simc->add_option("--profiles", sim.profiles_path,
                   "device profile pack JSON (default: built-in)");
  simc->add_option("--frames", sim.frames, "frame count, or comma list for a sweep")
      ->capture_default_str();
  simc->add_option("--trials", sim.trials, "Monte-Carlo trials")->capture_default_str();
  simc->add_flag("--no-jitter", sim.no_jitter, "disable transmission jitter");
  simc->add_option("--measure-local", sim.measure_model,
                   "measure a local forward pass of this checkpoint and emit a "
                   "calibrated profile");
  simc->add_option("--measure-repeats", sim.measure_repeats, "timed repeats")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*feat) return run_featurize(fo, g);
    if (*synth) return run_synth(so, g);
    if (*train) return run_train(to, g);
    if (*ev) return run_eval(eo, g);
    if (*cls) return run_classify(co, g);
    if (*cost) return run_cost(cso, g);
    if (*simc) return run_simulate(sim, g);
  } catch (const parconv::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const parconv::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const parconv::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
