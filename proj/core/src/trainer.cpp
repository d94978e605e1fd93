#include "parconv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "parconv/checkpoint.hpp"
#include "parconv/errors.hpp"
#include "parconv/rng.hpp"
#include "parconv/wav.hpp"

namespace parconv {

void TrainConfig::validate() const {
  if (epochs <= 0) throw InvalidConfigError("epochs must be positive");
  if (batch_size <= 0) throw InvalidConfigError("batch_size must be positive");
  if (learning_rate < 0.0) throw InvalidConfigError("learning_rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw InvalidConfigError("momentum must be in [0, 1)");
  }
  if (target_frames <= 0) throw InvalidConfigError("target_frames must be positive");
  if (grad_clip_norm < 0.0) throw InvalidConfigError("grad_clip_norm must be >= 0");
}

std::string TrainReport::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const EpochStats& e : epochs) {
    eps.push_back({{"epoch", e.epoch},
                   {"loss", e.loss},
                   {"train_accuracy", e.train_accuracy},
                   {"val_accuracy", e.val_accuracy}});
  }
  const nlohmann::json j{{"epochs", eps},
                         {"best_epoch", best_epoch},
                         {"best_val_accuracy", best_val_accuracy}};
  return j.dump(2);
}

Tensor featurize(const AudioBuffer& audio, const StftConfig& stft_cfg,
                 const MelConfig& mel_cfg, int target_frames) {
  const Spectrogram spec =
      fit_frames(mel_power_spectrogram(audio, stft_cfg, mel_cfg), target_frames);

  Tensor t({1, spec.n_mels, spec.n_frames});
  double peak = 0.0;
  for (const double v : spec.data) peak = std::max(peak, v);
  const double scale = peak > 0.0 ? 1.0 / peak : 1.0;
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<float>(spec.data[static_cast<std::size_t>(i)] * scale);
  }
  return t;
}

std::vector<FeaturizedSample> featurize_split(const DatasetManifest& data,
                                              Split split, const TrainConfig& cfg) {
  std::vector<FeaturizedSample> out;
  for (const ManifestEntry* e : data.split_entries(split)) {
    FeaturizedSample s;
    s.input = featurize(read_wav(e->path), cfg.stft, cfg.mel, cfg.target_frames);
    s.label = e->label;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

Tensor assemble_batch(const std::vector<FeaturizedSample>& samples,
                      const std::vector<std::size_t>& order, std::size_t begin,
                      std::size_t end) {
  const auto& first = samples[order[begin]].input;
  Tensor batch({static_cast<int>(end - begin), first.dim(0), first.dim(1),
                first.dim(2)});
  const std::int64_t stride = first.numel();
  for (std::size_t i = begin; i < end; ++i) {
    const auto& src = samples[order[i]].input;
    std::copy(src.data().begin(), src.data().end(),
              batch.data().begin() + static_cast<std::int64_t>(i - begin) * stride);
  }
  return batch;
}

int argmax_row(const Tensor& logits, int row) {
  const int k = logits.dim(1);
  int best = 0;
  for (int i = 1; i < k; ++i) {
    if (logits.at(row, i) > logits.at(row, best)) best = i;
  }
  return best;
}

}  // namespace

TrainReport train(Model& model, const DatasetManifest& data, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();

  const auto train_samples = featurize_split(data, Split::kTrain, cfg);
  const auto val_samples = featurize_split(data, Split::kVal, cfg);
  if (train_samples.empty() || val_samples.empty()) {
    throw InvalidConfigError("dataset must be non-empty in both splits");
  }
  model.stft_config = cfg.stft;
  model.mel_config = cfg.mel;

  std::vector<Var> params = model.parameters();
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (Var& p : params) velocity.emplace_back(p.value().shape());

  Rng shuffle_rng(Rng::mix_str(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  report.best_val_accuracy = -1.0;
  const float lr = static_cast<float>(cfg.learning_rate);
  const float mu = static_cast<float>(cfg.momentum);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    int step = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const Tensor batch = assemble_batch(train_samples, order, begin, end);
      std::vector<int> labels;
      labels.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        labels.push_back(train_samples[order[i]].label);
      }

      for (Var& p : params) p.zero_grad();
      Var logits = model.forward(batch);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (argmax_row(logits.value(), static_cast<int>(i)) ==
            labels[i]) {
          ++correct;
        }
      }
      Var loss = ops::softmax_cross_entropy(logits, labels);
      const double loss_value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("loss diverged (non-finite) at epoch " +
                              std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      loss_sum += loss_value * static_cast<double>(labels.size());
      backward(loss, /*release_graph=*/true);

      float clip_scale = 1.0f;
      if (cfg.grad_clip_norm > 0.0) {
        double sq = 0.0;
        for (Var& p : params) {
          for (const float g : p.grad().data()) {
            sq += static_cast<double>(g) * static_cast<double>(g);
          }
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip_norm) {
          clip_scale = static_cast<float>(cfg.grad_clip_norm / norm);
        }
      }

      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& value = params[pi].mutable_value();
        Tensor& vel = velocity[pi];
        const Tensor& grad = params[pi].grad();
        float* v = vel.raw();
        float* w = value.raw();
        const float* g = grad.raw();
        const std::int64_t n = value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
          v[i] = mu * v[i] + clip_scale * g[i];
          w[i] -= lr * v[i];
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(train_samples.size());
    stats.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(train_samples.size());
    stats.val_accuracy = evaluate(model, val_samples, cfg.batch_size).top1;
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (stats.val_accuracy > report.best_val_accuracy) {
      report.best_val_accuracy = stats.val_accuracy;
      report.best_epoch = epoch;
      if (!cfg.checkpoint_path.empty()) save_model(model, cfg.checkpoint_path);
    }
    if (cfg.early_stop_val_accuracy &&
        stats.val_accuracy >= *cfg.early_stop_val_accuracy) {
      break;
    }
  }
  return report;
}

EvalResult evaluate(Model& model, const std::vector<FeaturizedSample>& samples,
                    int batch_size) {
  if (samples.empty()) throw InvalidConfigError("evaluate on an empty split");
  EvalResult r;
  const int k = model.spec().num_classes;
  r.confusion.assign(static_cast<std::size_t>(k),
                     std::vector<std::int64_t>(static_cast<std::size_t>(k), 0));

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::int64_t correct = 0;
  for (std::size_t begin = 0; begin < samples.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    const Tensor logits = model.logits(assemble_batch(samples, order, begin, end));
    for (std::size_t i = begin; i < end; ++i) {
      const int truth = samples[i].label;
      const int pred = argmax_row(logits, static_cast<int>(i - begin));
      ++r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
      if (pred == truth) ++correct;
    }
  }
  r.top1 = static_cast<double>(correct) / static_cast<double>(samples.size());
  return r;
}

EvalResult evaluate(Model& model, const DatasetManifest& data, Split split,
                    const TrainConfig& cfg) {
  return evaluate(model, featurize_split(data, split, cfg), cfg.batch_size);
}

}  // namespace parconv
