#include "parconv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "parconv/errors.hpp"
#include "parconv/rng.hpp"
#include "parconv/wav.hpp"

namespace parconv {

namespace fs = std::filesystem;

int label_index(const std::string& label) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (label == kDrumLabels[static_cast<std::size_t>(i)]) return i;
  }
  std::string valid;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i > 0) valid += ", ";
    valid += kDrumLabels[static_cast<std::size_t>(i)];
  }
  throw LabelError("unknown label \"" + label + "\"; valid labels are: " + valid);
}

const char* label_name(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw LabelError("label index " + std::to_string(index) + " out of range");
  }
  return kDrumLabels[static_cast<std::size_t>(index)];
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  throw InvalidConfigError("unknown split \"" + s + "\"; expected train or val");
}

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "val"; }

std::vector<const ManifestEntry*> DatasetManifest::split_entries(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::array<int, kNumClasses> DatasetManifest::class_histogram(Split s) const {
  std::array<int, kNumClasses> hist{};
  for (const auto& e : entries) {
    if (e.split == s) ++hist[static_cast<std::size_t>(e.label)];
  }
  return hist;
}

DatasetManifest load_dataset(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot open manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  DatasetManifest m;
  std::unordered_map<std::string, Split> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest_path + ":" + std::to_string(line_no) +
                        ": bad JSON: " + e.what());
    }
    ManifestEntry entry;
    try {
      std::string p = j.at("path").get<std::string>();
      entry.path = fs::path(p).is_absolute() ? p : (base / p).string();
      entry.label = label_index(j.at("label").get<std::string>());
      entry.split = split_from_string(j.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest_path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }

    const auto [it, inserted] = seen.emplace(entry.path, entry.split);
    if (!inserted && it->second != entry.split) {
      throw SplitError(manifest_path + ": \"" + entry.path +
                       "\" appears in both train and val splits");
    }
    m.entries.push_back(std::move(entry));
  }

  std::vector<std::string> missing;
  for (const auto& e : m.entries) {
    if (!fs::exists(e.path)) missing.push_back(e.path);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << missing.size() << " manifest file(s) missing:";
    for (const auto& p : missing) os << "\n  " << p;
    throw IoError(os.str());
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  const fs::path base = fs::path(path).parent_path();
  for (const auto& e : manifest.entries) {
    // Store paths relative to the manifest when possible.
    std::string p = e.path;
    const auto rel = fs::path(p).lexically_relative(base.empty() ? "." : base);
    if (!rel.empty() && rel.native()[0] != '.') p = rel.string();
    const nlohmann::json j{{"path", p},
                           {"label", label_name(e.label)},
                           {"split", split_name(e.split)}};
    f << j.dump() << '\n';
  }
  if (!f) throw IoError("short write to " + path);
}

namespace {

constexpr int kSampleRate = 44100;
constexpr double kDuration = 1.0;

struct SynthParams {
  Rng& rng;
  std::vector<float>& out;
};

double env(double t, double tau) { return std::exp(-t / tau); }

// Decaying sine with a downward pitch glide.
void add_tone(std::vector<double>& buf, double f_start, double f_end, double tau,
              double amp, double phase) {
  const int n = static_cast<int>(buf.size());
  double ph = phase;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f = f_start + (f_end - f_start) * std::min(1.0, t / kDuration);
    ph += 2.0 * std::numbers::pi * f / kSampleRate;
    buf[static_cast<std::size_t>(i)] += amp * env(t, tau) * std::sin(ph);
  }
}

// White noise shaped by repeated first differences (high-pass) or one-pole
// smoothing (low-pass), with an exponential decay.
void add_noise(std::vector<double>& buf, Rng& rng, double tau, double amp,
               int highpass_passes, double lowpass_alpha) {
  const int n = static_cast<int>(buf.size());
  std::vector<double> noise(static_cast<std::size_t>(n));
  for (auto& v : noise) v = rng.uniform(-1.0, 1.0);
  for (int p = 0; p < highpass_passes; ++p) {
    for (int i = n - 1; i > 0; --i) {
      noise[static_cast<std::size_t>(i)] =
          0.5 * (noise[static_cast<std::size_t>(i)] -
                 noise[static_cast<std::size_t>(i - 1)]);
    }
  }
  if (lowpass_alpha > 0.0) {
    double y = 0.0;
    for (int i = 0; i < n; ++i) {
      y = lowpass_alpha * y + (1.0 - lowpass_alpha) * noise[static_cast<std::size_t>(i)];
      noise[static_cast<std::size_t>(i)] = y;
    }
  }
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    buf[static_cast<std::size_t>(i)] += amp * env(t, tau) * noise[static_cast<std::size_t>(i)];
  }
}

/// Class-distinct signatures:
///   kick        low sine glide 110->45 Hz plus a 5 ms click
///   tom         mid sine ~170 Hz with a small glide
///   snare       ~190 Hz tone burst plus mid-band noise
///   closed_hat  high-passed noise, ~25 ms decay
///   open_hat    high-passed noise, ~350 ms decay
///   ride        inharmonic metallic partials 2.5-8 kHz, long sustain
///   crash       bright broadband noise, ~600 ms decay
std::vector<double> synth_class(int label, Rng& rng) {
  const int n = static_cast<int>(kSampleRate * kDuration);
  std::vector<double> buf(static_cast<std::size_t>(n), 0.0);
  const double jitter = rng.uniform(0.92, 1.08);
  const double amp = rng.uniform(0.6, 0.9);

  switch (label) {
    case 0:  // tom
      add_tone(buf, 175.0 * jitter, 150.0 * jitter, 0.25 * rng.uniform(0.85, 1.15),
               amp, rng.uniform(0.0, 6.28));
      add_noise(buf, rng, 0.05, 0.04 * amp, 1, 0.0);
      break;
    case 1:  // kick
      add_tone(buf, 110.0 * jitter, 45.0 * jitter, 0.18 * rng.uniform(0.85, 1.15),
               amp, rng.uniform(0.0, 6.28));
      for (int i = 0; i < kSampleRate / 200; ++i) {  // onset click
        buf[static_cast<std::size_t>(i)] += 0.25 * amp * rng.uniform(-1.0, 1.0);
      }
      break;
    case 2:  // snare
      add_tone(buf, 190.0 * jitter, 180.0 * jitter, 0.08 * rng.uniform(0.85, 1.15),
               0.6 * amp, rng.uniform(0.0, 6.28));
      add_noise(buf, rng, 0.12 * rng.uniform(0.85, 1.15), 0.8 * amp, 1, 0.6);
      break;
    case 3:  // closed_hat
      add_noise(buf, rng, 0.025 * rng.uniform(0.85, 1.15), amp, 2, 0.0);
      break;
    case 4: {  // ride
      for (int p = 0; p < 6; ++p) {
        const double f = (2500.0 + 1100.0 * p) * rng.uniform(0.97, 1.03);
        add_tone(buf, f, f, 0.7 * rng.uniform(0.85, 1.15), amp / 6.0,
                 rng.uniform(0.0, 6.28));
      }
      add_noise(buf, rng, 0.5, 0.08 * amp, 2, 0.0);
      break;
    }
    case 5:  // crash: flat broadband, unlike the high-shelf hats
      add_noise(buf, rng, 0.6 * rng.uniform(0.85, 1.15), amp, 0, 0.0);
      break;
    case 6:  // open_hat
      add_noise(buf, rng, 0.35 * rng.uniform(0.85, 1.15), amp, 2, 0.0);
      break;
    default:
      throw LabelError("bad label index " + std::to_string(label));
  }

  double peak = 0.0;
  for (const double v : buf) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double scale = 0.9 * amp / peak;
    for (auto& v : buf) v *= scale;
  }
  return buf;
}

}  // namespace

DatasetManifest synthesize_toy_dataset(int n_per_class, std::uint64_t seed,
                                       const std::string& out_dir, Split split) {
  if (n_per_class < 1) {
    throw InvalidConfigError("n_per_class must be at least 1");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  DatasetManifest m;
  for (int label = 0; label < kNumClasses; ++label) {
    for (int index = 0; index < n_per_class; ++index) {
      const std::uint64_t file_seed = Rng::mix(
          Rng::mix_str(seed, split_name(split)),
          Rng::mix(static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(index)));
      Rng rng(file_seed);
      const std::vector<double> buf = synth_class(label, rng);

      AudioBuffer audio;
      audio.sample_rate_hz = kSampleRate;
      audio.samples.assign(buf.begin(), buf.end());

      char name[64];
      std::snprintf(name, sizeof name, "%s_%s_%03d.wav", split_name(split),
                    label_name(label), index);
      const std::string path = (fs::path(out_dir) / name).string();
      write_wav_pcm16(path, audio);
      m.entries.push_back({path, label, split});
    }
  }
  return m;
}

}  // namespace parconv
