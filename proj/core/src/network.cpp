#include "parconv/network.hpp"

#include <cmath>

#include "parconv/errors.hpp"
#include "parconv/rng.hpp"

namespace parconv {

NetworkSpec NetworkSpec::standard(int num_classes, int group_size) {
  NetworkSpec s;
  s.num_classes = num_classes;
  s.group_size = group_size;
  const auto block = [&s](std::initializer_list<int> widths) {
    for (const int w : widths) s.layers.push_back(LayerSpec::parallel(w));
    s.layers.push_back(LayerSpec::pool());
  };
  block({64, 64});
  block({128, 128});
  block({256, 256, 256});
  block({512, 512, 512, 512, 512});
  s.layers.push_back(LayerSpec::parallel(1024));
  s.layers.push_back(LayerSpec::parallel(1024));
  s.layers.push_back(LayerSpec::gap());
  s.layers.push_back(LayerSpec::fc(num_classes));
  return s;
}

int NetworkSpec::effective_groups(int in_channels, int out_channels) const {
  if (in_channels % group_size == 0 && out_channels % group_size == 0) {
    return group_size;
  }
  return 1;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw InvalidConfigError("empty layer chain");
  if (num_classes <= 0) throw InvalidConfigError("num_classes must be positive");
  if (group_size <= 0) throw GroupError("group_size must be positive");
  if (kernel_size <= 0 || kernel_size % 2 == 0) {
    throw InvalidConfigError("kernel_size must be odd and positive");
  }
  for (const int d : input_shape) {
    if (d <= 0) throw InvalidConfigError("input_shape dims must be positive");
  }
  if (layers.back().kind != LayerSpec::Kind::kFullyConnected) {
    throw InvalidConfigError("layer chain must end in a fully-connected head");
  }

  int h = input_shape[1];
  int w = input_shape[2];
  bool gap_seen = false;
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerSpec::Kind::kParallelConv:
        if (gap_seen) throw InvalidConfigError("conv after global pool");
        if (l.out_channels <= 0) {
          throw InvalidConfigError("conv layer needs positive out_channels");
        }
        break;
      case LayerSpec::Kind::kAvgPool:
        if (h % 2 != 0 || w % 2 != 0) {
          throw ShapeError("avg pool on odd spatial dims " + std::to_string(h) +
                           "x" + std::to_string(w));
        }
        h /= 2;
        w /= 2;
        break;
      case LayerSpec::Kind::kGlobalAvgPool:
        gap_seen = true;
        break;
      case LayerSpec::Kind::kFullyConnected:
        if (l.out_channels != num_classes) {
          throw InvalidConfigError("fully-connected head must emit num_classes");
        }
        break;
    }
  }
  if (!gap_seen) {
    throw InvalidConfigError("layer chain needs a global average pool before FC");
  }
}

namespace {

Tensor uniform_tensor(std::vector<int> shape, float bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform_f(-bound, bound);
  return t;
}

}  // namespace

Model build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();

  Model m;
  m.spec_ = spec;
  Rng rng(seed);

  int channels = spec.input_shape[0];
  int fc_in = channels;
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::kParallelConv: {
        ConvLayerSpec cs;
        cs.kind = ConvKind::kParallel;
        cs.d_k = spec.kernel_size;
        cs.d_m = channels;
        cs.d_n = l.out_channels;
        cs.groups = spec.effective_groups(channels, l.out_channels);
        cs.bias = spec.bias;
        cs.validate();

        // Both branches sum into one output, so the block's fan-in is the
        // total number of inputs feeding one output unit.
        const int fan_in = cs.d_k * cs.d_k * (cs.d_m / cs.groups) + cs.d_m;
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));

        Model::ParallelLayer layer;
        layer.spec = cs;
        layer.w3 = Var(
            uniform_tensor({cs.d_n, cs.d_m / cs.groups, cs.d_k, cs.d_k}, bound, rng),
            true);
        layer.w1 = Var(uniform_tensor({cs.d_n, cs.d_m, 1, 1}, bound, rng), true);
        if (cs.bias) layer.b = Var(Tensor({cs.d_n}), true);
        m.conv_layers_.push_back(std::move(layer));

        channels = l.out_channels;
        fc_in = channels;
        break;
      }
      case LayerSpec::Kind::kAvgPool:
      case LayerSpec::Kind::kGlobalAvgPool:
        break;
      case LayerSpec::Kind::kFullyConnected: {
        const float bound = std::sqrt(6.0f / static_cast<float>(fc_in));
        m.fc_.w = Var(uniform_tensor({spec.num_classes, fc_in}, bound, rng), true);
        m.fc_.b = Var(Tensor({spec.num_classes}), true);
        break;
      }
    }
  }
  return m;
}

std::vector<Var> Model::parameters() {
  std::vector<Var> out;
  for (auto& l : conv_layers_) {
    out.push_back(l.w3);
    out.push_back(l.w1);
    if (l.b.defined()) out.push_back(l.b);
  }
  out.push_back(fc_.w);
  out.push_back(fc_.b);
  return out;
}

std::int64_t Model::num_parameters() const {
  std::int64_t n = 0;
  for (const auto& l : conv_layers_) {
    n += l.w3.value().numel() + l.w1.value().numel();
    if (l.b.defined()) n += l.b.value().numel();
  }
  n += fc_.w.value().numel() + fc_.b.value().numel();
  return n;
}

Var Model::forward(const Tensor& batch) {
  if (batch.ndim() != 4 || batch.dim(1) != spec_.input_shape[0] ||
      batch.dim(2) != spec_.input_shape[1] || batch.dim(3) != spec_.input_shape[2]) {
    throw ShapeError("model expects N x " + std::to_string(spec_.input_shape[0]) +
                     " x " + std::to_string(spec_.input_shape[1]) + " x " +
                     std::to_string(spec_.input_shape[2]) + " input, got " +
                     batch.shape_string());
  }

  Var x(batch, false);
  std::size_t conv_index = 0;
  for (const LayerSpec& l : spec_.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::kParallelConv: {
        auto& layer = conv_layers_[conv_index++];
        std::optional<Var> bias;
        if (layer.b.defined()) bias = layer.b;
        x = ops::parallel_conv(x, layer.w3, layer.w1, bias, layer.spec);
        x = ops::relu(x);
        break;
      }
      case LayerSpec::Kind::kAvgPool:
        x = ops::avg_pool2(x);
        break;
      case LayerSpec::Kind::kGlobalAvgPool:
        x = ops::global_avg_pool(x);
        break;
      case LayerSpec::Kind::kFullyConnected:
        x = ops::linear(x, fc_.w, fc_.b);
        break;
    }
  }
  return x;
}

Tensor Model::logits(const Tensor& batch) { return forward(batch).value(); }

}  // namespace parconv
