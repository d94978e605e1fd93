#pragma once

#include <complex>
#include <string>
#include <vector>

#include "parconv/wav.hpp"

namespace parconv {

enum class WindowKind { kHann };
enum class MelScale { kHtk };
enum class MelNorm { kArea, kNone };

struct StftConfig {
  int window_size = 2048;  // power of two
  int hop_length = 512;
  WindowKind window_kind = WindowKind::kHann;
  bool centered = true;

  void validate() const;  // InvalidConfig on violation
};

struct MelConfig {
  int n_mels = 128;
  double f_min_hz = 20.0;
  double f_max_hz = 20000.0;
  MelScale mel_scale = MelScale::kHtk;
  MelNorm normalization = MelNorm::kArea;
  bool log_compress = false;  // ln(1 + S) applied after Mel pooling

  void validate(int sample_rate_hz) const;
};

/// Column-major frames: column t is the half spectrum of frame t.
struct ComplexSpectrum {
  int bins = 0;    // window_size / 2 + 1
  int frames = 0;
  std::vector<std::complex<double>> data;  // bins * frames, bin-major rows

  std::complex<double>& at(int bin, int frame) {
    return data[static_cast<std::size_t>(bin) * frames + frame];
  }
  const std::complex<double>& at(int bin, int frame) const {
    return data[static_cast<std::size_t>(bin) * frames + frame];
  }
};

/// Mel-pooled power spectrogram, shape (n_mels, n_frames) row-major,
/// with the configuration that produced it.
struct Spectrogram {
  int n_mels = 0;
  int n_frames = 0;
  std::vector<double> data;
  int sample_rate_hz = 0;
  StftConfig stft;
  MelConfig mel;

  double& at(int m, int t) {
    return data[static_cast<std::size_t>(m) * n_frames + t];
  }
  double at(int m, int t) const {
    return data[static_cast<std::size_t>(m) * n_frames + t];
  }
};

/// Triangular Mel filterbank (n_mels x n_bins) plus the band centers in Hz.
struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;  // n_fft / 2 + 1
  std::vector<double> weights;
  std::vector<double> center_freqs_hz;

  double at(int m, int k) const {
    return weights[static_cast<std::size_t>(m) * n_bins + k];
  }
};

/// HTK Mel scale: mel(f) = 2595 * log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Short-time Fourier transform. With centered framing the signal is
/// reflection-padded by window_size/2 on both ends and
/// n_frames = 1 + floor(len / hop); otherwise frames start at sample 0 and
/// the signal must be at least one window long.
ComplexSpectrum stft(const AudioBuffer& audio, const StftConfig& cfg);

/// Triangular filters with centers equally spaced on the Mel scale between
/// mel(f_min) and mel(f_max). Area normalization scales each filter to unit
/// integral over Hz.
MelFilterbank mel_filterbank(int sample_rate_hz, int n_fft, const MelConfig& cfg);

/// filterbank * |stft|^2, shape (n_mels, n_frames).
Spectrogram mel_power_spectrogram(const AudioBuffer& audio,
                                  const StftConfig& stft_cfg,
                                  const MelConfig& mel_cfg);

/// Center-crop or symmetrically zero-pad along time to target_frames.
Spectrogram fit_frames(const Spectrogram& spec, int target_frames);

}  // namespace parconv
