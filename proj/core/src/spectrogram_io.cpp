#include "parconv/spectrogram_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "parconv/errors.hpp"

namespace parconv {

namespace {

using nlohmann::json;

void put_f32_le(std::vector<unsigned char>& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, sizeof u);
  out.push_back(static_cast<unsigned char>(u & 0xff));
  out.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &u, sizeof v);
  return v;
}

json stft_to_json(const StftConfig& c) {
  return json{{"window_size", c.window_size},
              {"hop_length", c.hop_length},
              {"window", "hann"},
              {"centered", c.centered}};
}

json mel_to_json(const MelConfig& c) {
  return json{{"n_mels", c.n_mels},
              {"f_min_hz", c.f_min_hz},
              {"f_max_hz", c.f_max_hz},
              {"scale", "htk"},
              {"normalization", c.normalization == MelNorm::kArea ? "area" : "none"},
              {"log_compress", c.log_compress}};
}

StftConfig stft_from_json(const json& j) {
  StftConfig c;
  c.window_size = j.at("window_size").get<int>();
  c.hop_length = j.at("hop_length").get<int>();
  c.centered = j.at("centered").get<bool>();
  return c;
}

MelConfig mel_from_json(const json& j) {
  MelConfig c;
  c.n_mels = j.at("n_mels").get<int>();
  c.f_min_hz = j.at("f_min_hz").get<double>();
  c.f_max_hz = j.at("f_max_hz").get<double>();
  c.normalization =
      j.at("normalization").get<std::string>() == "none" ? MelNorm::kNone : MelNorm::kArea;
  c.log_compress = j.value("log_compress", false);
  return c;
}

}  // namespace

void write_spectrogram(const std::string& path, const Spectrogram& spec) {
  std::vector<unsigned char> bytes;
  bytes.reserve(spec.data.size() * 4);
  for (const double v : spec.data) put_f32_le(bytes, static_cast<float>(v));

  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + path);
  bin.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!bin) throw IoError("short write to " + path);

  const json sidecar{{"shape", {spec.n_mels, spec.n_frames}},
                     {"dtype", "float32_le"},
                     {"sample_rate", spec.sample_rate_hz},
                     {"stft", stft_to_json(spec.stft)},
                     {"mel", mel_to_json(spec.mel)}};
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw IoError("cannot write " + path + ".json");
  js << sidecar.dump(2) << '\n';
}

Spectrogram read_spectrogram(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw IoError("cannot open sidecar " + path + ".json");
  json sidecar;
  try {
    js >> sidecar;
  } catch (const json::exception& e) {
    throw FormatError("bad sidecar " + path + ".json: " + e.what());
  }

  Spectrogram spec;
  try {
    spec.n_mels = sidecar.at("shape").at(0).get<int>();
    spec.n_frames = sidecar.at("shape").at(1).get<int>();
    spec.sample_rate_hz = sidecar.at("sample_rate").get<int>();
    spec.stft = stft_from_json(sidecar.at("stft"));
    spec.mel = mel_from_json(sidecar.at("mel"));
  } catch (const json::exception& e) {
    throw FormatError("bad sidecar " + path + ".json: " + e.what());
  }

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());
  const std::size_t expected =
      static_cast<std::size_t>(spec.n_mels) * static_cast<std::size_t>(spec.n_frames) * 4;
  if (bytes.size() != expected) {
    throw FormatError(path + ": expected " + std::to_string(expected) +
                      " bytes for shape (" + std::to_string(spec.n_mels) + ", " +
                      std::to_string(spec.n_frames) + "), found " +
                      std::to_string(bytes.size()));
  }
  spec.data.resize(static_cast<std::size_t>(spec.n_mels) * spec.n_frames);
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    spec.data[i] = static_cast<double>(get_f32_le(bytes.data() + i * 4));
  }
  return spec;
}

}  // namespace parconv
