#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "parconv/audio_frontend.hpp"
#include "parconv/dataset.hpp"
#include "parconv/network.hpp"

namespace parconv {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int target_frames = 128;

  /// Stop once validation accuracy reaches this value (checked per epoch).
  std::optional<double> early_stop_val_accuracy;

  /// Rescale gradients when their global L2 norm exceeds this; keeps the
  /// deep unnormalized net stable at useful learning rates. 0 disables.
  double grad_clip_norm = 1.0;

  /// Where the best-validation checkpoint is written; empty disables saving.
  std::string checkpoint_path;

  StftConfig stft;
  MelConfig mel = default_train_mel();

  /// Training featurizes with log compression on: raw power spans orders of
  /// magnitude and starves the gradients.
  static MelConfig default_train_mel() {
    MelConfig m;
    m.log_compress = true;
    return m;
  }

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;  // sample-mean training loss over the epoch
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;

  std::string to_json() const;
};

struct FeaturizedSample {
  Tensor input;  // (1, n_mels, target_frames)
  int label = 0;
};

/// WAV -> Mel power spectrogram -> fixed frame count -> peak-normalized
/// float tensor (all-zero input stays all-zero).
Tensor featurize(const AudioBuffer& audio, const StftConfig& stft_cfg,
                 const MelConfig& mel_cfg, int target_frames);

std::vector<FeaturizedSample> featurize_split(const DatasetManifest& data,
                                              Split split, const TrainConfig& cfg);

/// SGD with momentum over the train split, evaluating the val split each
/// epoch. Deterministic for a fixed seed: shuffle order, batching, and all
/// reductions are scheduling-independent. A NaN/Inf loss raises
/// DivergenceError naming the epoch and step.
TrainReport train(Model& model, const DatasetManifest& data, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

struct EvalResult {
  double top1 = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
};

EvalResult evaluate(Model& model, const std::vector<FeaturizedSample>& samples,
                    int batch_size = 16);
EvalResult evaluate(Model& model, const DatasetManifest& data, Split split,
                    const TrainConfig& cfg);

}  // namespace parconv
