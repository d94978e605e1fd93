#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "parconv/audio_frontend.hpp"
#include "parconv/autograd.hpp"
#include "parconv/tensor.hpp"

namespace parconv {

/// One entry of the layer chain.
struct LayerSpec {
  enum class Kind { kParallelConv, kAvgPool, kGlobalAvgPool, kFullyConnected };
  Kind kind = Kind::kParallelConv;
  int out_channels = 0;  // for kParallelConv / kFullyConnected

  static LayerSpec parallel(int out_channels) {
    return {Kind::kParallelConv, out_channels};
  }
  static LayerSpec pool() { return {Kind::kAvgPool, 0}; }
  static LayerSpec gap() { return {Kind::kGlobalAvgPool, 0}; }
  static LayerSpec fc(int classes) { return {Kind::kFullyConnected, classes}; }
};

/// Architecture description: the parallel-conv chain with interleaved
/// average-pool downsamplings, a global average pool, and a final
/// fully-connected classifier. input_shape is (channels, mel bands, frames).
struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::array<int, 3> input_shape{1, 128, 128};
  int num_classes = 7;
  int group_size = 4;
  int kernel_size = 3;
  bool bias = true;

  /// 64,64 | pool | 128,128 | pool | 256x3 | pool | 512x5 | pool | 1024,1024
  /// | GAP | FC.
  static NetworkSpec standard(int num_classes = 7, int group_size = 4);

  /// A layer's group count is the configured group_size when it divides both
  /// channel counts, else 1 (the first layer has a single input channel).
  int effective_groups(int in_channels, int out_channels) const;

  void validate() const;
};

/// A built network: parameters plus the forward graph builder. Weights are
/// float32; the graph is rebuilt per forward call.
class Model {
 public:
  struct ParallelLayer {
    ConvLayerSpec spec;
    Var w3;  // grouped d_k x d_k branch, (d_n, d_m/g, k, k)
    Var w1;  // pointwise branch, (d_n, d_m, 1, 1)
    Var b;   // undefined when bias disabled
  };
  struct FcLayer {
    Var w;  // (classes, in_features)
    Var b;
  };

  const NetworkSpec& spec() const { return spec_; }

  /// Front-end settings the model was trained with; classify-style callers
  /// featurize with these so inference matches training. Serialized in the
  /// checkpoint.
  StftConfig stft_config;
  MelConfig mel_config;

  std::vector<ParallelLayer>& conv_layers() { return conv_layers_; }
  const std::vector<ParallelLayer>& conv_layers() const { return conv_layers_; }
  FcLayer& fc() { return fc_; }
  const FcLayer& fc() const { return fc_; }

  /// All trainable parameters in checkpoint order.
  std::vector<Var> parameters();

  std::int64_t num_parameters() const;

  /// Forward pass over an N x C x H x W batch; returns (N, num_classes)
  /// logits. ShapeError when the input does not match the spec.
  Var forward(const Tensor& batch);

  /// Inference helper: logits for a batch without building gradients.
  Tensor logits(const Tensor& batch);

 private:
  friend Model build_network(const NetworkSpec&, std::uint64_t);
  friend class CheckpointReader;

  NetworkSpec spec_;
  std::vector<ParallelLayer> conv_layers_;
  FcLayer fc_;
};

/// Instantiates the network with seeded fan-in scaled uniform weights
/// (both branches of a block share the block's total fan-in) and zero
/// biases. The same seed always yields identical weights.
Model build_network(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace parconv
