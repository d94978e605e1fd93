#include "parconv/audio_frontend.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parconv/errors.hpp"
#include "parconv/fft.hpp"

namespace parconv {

void StftConfig::validate() const {
  if (window_size <= 0 || hop_length <= 0) {
    throw InvalidConfigError("window_size and hop_length must be positive");
  }
  if (hop_length > window_size) {
    throw InvalidConfigError("hop_length " + std::to_string(hop_length) +
                             " exceeds window_size " + std::to_string(window_size));
  }
  if (!is_power_of_two(window_size)) {
    throw InvalidConfigError("window_size must be a power of two, got " +
                             std::to_string(window_size));
  }
}

void MelConfig::validate(int sample_rate_hz) const {
  if (n_mels <= 0) throw InvalidConfigError("n_mels must be positive");
  if (f_min_hz < 0.0) throw InvalidConfigError("f_min_hz must be >= 0");
  if (f_max_hz <= f_min_hz) {
    throw InvalidConfigError("f_max_hz must exceed f_min_hz");
  }
  if (f_max_hz > sample_rate_hz / 2.0) {
    throw InvalidConfigError(
        "f_max_hz " + std::to_string(f_max_hz) + " exceeds Nyquist " +
        std::to_string(sample_rate_hz / 2.0) + " for sample rate " +
        std::to_string(sample_rate_hz) + " Hz");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace {

// Reflection without edge duplication, librosa-style: pad index -1 maps to 1.
std::size_t reflect_index(std::int64_t i, std::int64_t len) {
  if (len == 1) return 0;
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

ComplexSpectrum stft(const AudioBuffer& audio, const StftConfig& cfg) {
  cfg.validate();
  if (audio.samples.empty()) throw EmptyAudioError("stft: empty audio");

  const int win = cfg.window_size;
  const int hop = cfg.hop_length;
  const auto len = static_cast<std::int64_t>(audio.samples.size());

  int n_frames;
  std::int64_t first_offset;  // sample index of frame 0 relative to input
  if (cfg.centered) {
    n_frames = static_cast<int>(1 + len / hop);
    first_offset = -win / 2;
  } else {
    if (len < win) {
      throw InvalidConfigError("non-centered stft needs at least " +
                               std::to_string(win) + " samples, got " +
                               std::to_string(len));
    }
    n_frames = static_cast<int>(1 + (len - win) / hop);
    first_offset = 0;
  }

  const std::vector<double> window = hann_window_periodic(win);

  ComplexSpectrum out;
  out.bins = win / 2 + 1;
  out.frames = n_frames;
  out.data.assign(static_cast<std::size_t>(out.bins) * n_frames, {0.0, 0.0});

  std::vector<std::complex<double>> frame(static_cast<std::size_t>(win));
  for (int t = 0; t < n_frames; ++t) {
    const std::int64_t start = first_offset + static_cast<std::int64_t>(t) * hop;
    for (int i = 0; i < win; ++i) {
      const std::int64_t j = start + i;
      double s;
      if (j >= 0 && j < len) {
        s = audio.samples[static_cast<std::size_t>(j)];
      } else if (cfg.centered) {
        s = audio.samples[reflect_index(j, len)];
      } else {
        s = 0.0;
      }
      frame[static_cast<std::size_t>(i)] = {s * window[static_cast<std::size_t>(i)], 0.0};
    }
    fft_radix2(frame);
    for (int k = 0; k < out.bins; ++k) {
      out.at(k, t) = frame[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

MelFilterbank mel_filterbank(int sample_rate_hz, int n_fft, const MelConfig& cfg) {
  cfg.validate(sample_rate_hz);

  const int n_bins = n_fft / 2 + 1;
  const int n_mels = cfg.n_mels;

  // n_mels + 2 break frequencies equally spaced on the Mel scale; the inner
  // n_mels are the band centers.
  const double mel_lo = hz_to_mel(cfg.f_min_hz);
  const double mel_hi = hz_to_mel(cfg.f_max_hz);
  std::vector<double> breaks(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double m = mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1);
    breaks[static_cast<std::size_t>(i)] = mel_to_hz(m);
  }

  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = n_bins;
  fb.weights.assign(static_cast<std::size_t>(n_mels) * n_bins, 0.0);
  fb.center_freqs_hz.assign(breaks.begin() + 1, breaks.end() - 1);

  for (int m = 0; m < n_mels; ++m) {
    const double lo = breaks[static_cast<std::size_t>(m)];
    const double mid = breaks[static_cast<std::size_t>(m) + 1];
    const double hi = breaks[static_cast<std::size_t>(m) + 2];
    const double norm =
        cfg.normalization == MelNorm::kArea ? 2.0 / (hi - lo) : 1.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate_hz / n_fft;
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      const double w = std::max(0.0, std::min(rising, falling));
      fb.weights[static_cast<std::size_t>(m) * n_bins + k] = w * norm;
    }
  }
  return fb;
}

Spectrogram mel_power_spectrogram(const AudioBuffer& audio,
                                  const StftConfig& stft_cfg,
                                  const MelConfig& mel_cfg) {
  const ComplexSpectrum spec = stft(audio, stft_cfg);
  const MelFilterbank fb =
      mel_filterbank(audio.sample_rate_hz, stft_cfg.window_size, mel_cfg);

  Spectrogram out;
  out.n_mels = fb.n_mels;
  out.n_frames = spec.frames;
  out.sample_rate_hz = audio.sample_rate_hz;
  out.stft = stft_cfg;
  out.mel = mel_cfg;
  out.data.assign(static_cast<std::size_t>(out.n_mels) * out.n_frames, 0.0);

  std::vector<double> power(static_cast<std::size_t>(spec.bins));
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) {
      power[static_cast<std::size_t>(k)] = std::norm(spec.at(k, t));
    }
    for (int m = 0; m < out.n_mels; ++m) {
      const double* w = &fb.weights[static_cast<std::size_t>(m) * fb.n_bins];
      double acc = 0.0;
      for (int k = 0; k < spec.bins; ++k) acc += w[k] * power[static_cast<std::size_t>(k)];
      out.at(m, t) = mel_cfg.log_compress ? std::log1p(acc) : acc;
    }
  }
  return out;
}

Spectrogram fit_frames(const Spectrogram& spec, int target_frames) {
  if (target_frames <= 0) {
    throw InvalidConfigError("target_frames must be positive");
  }
  if (spec.n_frames == target_frames) return spec;

  Spectrogram out;
  out.n_mels = spec.n_mels;
  out.n_frames = target_frames;
  out.sample_rate_hz = spec.sample_rate_hz;
  out.stft = spec.stft;
  out.mel = spec.mel;
  out.data.assign(static_cast<std::size_t>(out.n_mels) * target_frames, 0.0);

  if (spec.n_frames > target_frames) {
    const int start = (spec.n_frames - target_frames) / 2;
    for (int m = 0; m < out.n_mels; ++m) {
      for (int t = 0; t < target_frames; ++t) out.at(m, t) = spec.at(m, start + t);
    }
  } else {
    const int left = (target_frames - spec.n_frames) / 2;
    for (int m = 0; m < out.n_mels; ++m) {
      for (int t = 0; t < spec.n_frames; ++t) out.at(m, left + t) = spec.at(m, t);
    }
  }
  return out;
}

}  // namespace parconv
