#include "parconv/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "parconv/errors.hpp"

namespace parconv {

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatIeeeFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_le32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_le16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

std::string codec_name(std::uint16_t tag) {
  switch (tag) {
    case 0x0002: return "ADPCM";
    case 0x0006: return "A-law";
    case 0x0007: return "mu-law";
    case 0x0055: return "MP3";
    default: break;
  }
  return "tag 0x" + [tag] {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04x", tag);
    return std::string(buf);
  }();
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path + ": unsupported format (not a RIFF/WAVE file)");
  }

  std::uint16_t format_tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
  bool have_fmt = false;
  const unsigned char* data_ptr = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t size = le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw FormatError(path + ": truncated chunk '" + std::string(id, 4) + "'");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(path + ": fmt chunk too small");
      format_tag = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      sample_rate = le32(bytes.data() + body + 4);
      bits_per_sample = le16(bytes.data() + body + 14);
      if (format_tag == kFormatExtensible && size >= 40) {
        // Sub-format GUID starts with the effective format tag.
        format_tag = le16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (data_ptr == nullptr) throw FormatError(path + ": missing data chunk");
  if (channels == 0) throw FormatError(path + ": zero channels");
  if (sample_rate == 0) throw FormatError(path + ": zero sample rate");

  const bool pcm16 = format_tag == kFormatPcm && bits_per_sample == 16;
  const bool f32 = format_tag == kFormatIeeeFloat && bits_per_sample == 32;
  if (!pcm16 && !f32) {
    if (format_tag != kFormatPcm && format_tag != kFormatIeeeFloat) {
      throw FormatError(path + ": unsupported format (compressed codec " +
                        codec_name(format_tag) +
                        "); only PCM 16-bit and IEEE float 32-bit are supported");
    }
    throw FormatError(path + ": unsupported format (" +
                      std::to_string(bits_per_sample) +
                      "-bit); only PCM 16-bit and IEEE float 32-bit are supported");
  }

  const std::uint32_t bytes_per_sample = bits_per_sample / 8;
  const std::uint32_t frame_bytes = bytes_per_sample * channels;
  const std::uint32_t n_frames = data_size / frame_bytes;

  AudioBuffer out;
  out.sample_rate_hz = static_cast<int>(sample_rate);
  out.samples.resize(n_frames);
  for (std::uint32_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = data_ptr + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(le16(s));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        std::uint32_t u = le32(s);
        float fv;
        std::memcpy(&fv, &u, sizeof fv);
        acc += static_cast<double>(fv);
      }
    }
    const float v = static_cast<float>(acc / channels);
    if (!std::isfinite(v)) {
      throw FormatError(path + ": non-finite sample at frame " + std::to_string(i));
    }
    out.samples[i] = v;
  }
  return out;
}

void write_wav_pcm16(const std::string& path, const AudioBuffer& audio) {
  if (audio.samples.empty()) throw EmptyAudioError("refusing to write empty WAV");
  if (audio.sample_rate_hz <= 0) throw InvalidConfigError("invalid sample rate");

  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  const std::uint32_t data_size = n * 2;

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_le32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_le32(out, 16);
  put_le16(out, kFormatPcm);
  put_le16(out, 1);  // mono
  put_le32(out, static_cast<std::uint32_t>(audio.sample_rate_hz));
  put_le32(out, static_cast<std::uint32_t>(audio.sample_rate_hz) * 2);
  put_le16(out, 2);   // block align
  put_le16(out, 16);  // bits per sample
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le32(out, data_size);

  for (const float s : audio.samples) {
    const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const long q = std::lround(clamped * 32767.0);
    put_le16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

}  // namespace parconv
