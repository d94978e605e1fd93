#pragma once

#include <string>
#include <vector>

namespace parconv {

/// Mono PCM audio. Amplitudes nominally in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate_hz = 0;
};

/// Reads a RIFF/WAVE file. Accepts PCM 16-bit and IEEE float 32-bit at any
/// sample rate; multi-channel input is downmixed by averaging channels.
/// Compressed or unsupported codecs raise FormatError with the format tag.
AudioBuffer read_wav(const std::string& path);

/// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] and rounded to
/// the nearest integer code, so the output is bit-identical across runs.
void write_wav_pcm16(const std::string& path, const AudioBuffer& audio);

}  // namespace parconv
