#pragma once

#include <string>

#include "parconv/audio_frontend.hpp"

namespace parconv {

/// Writes the spectrogram as flat little-endian float32, row-major
/// (n_mels, n_frames), plus a JSON sidecar at path + ".json" recording
/// shape, sample rate, and the STFT/Mel configuration.
void write_spectrogram(const std::string& path, const Spectrogram& spec);

/// Reads a spectrogram written by write_spectrogram. The sidecar is
/// authoritative for shape and configuration; a size mismatch between
/// sidecar and binary raises FormatError.
Spectrogram read_spectrogram(const std::string& path);

}  // namespace parconv
