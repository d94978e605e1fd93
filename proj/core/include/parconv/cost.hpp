#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parconv/autograd.hpp"
#include "parconv/network.hpp"

namespace parconv {

/// Exact rational with normalized sign and gcd-reduced terms.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d);

  Rational operator+(const Rational& o) const;
  bool operator==(const Rational& o) const = default;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

/// Multiply-accumulate count of a standard conv layer on an h x w map:
/// h * w * k^2 * m * n.
std::int64_t flops_standard(const ConvLayerSpec& layer, int h, int w);

/// Multiply-accumulate count of a parallel conv layer:
/// h * w * k^2 * (m/g) * n  +  h * w * m * n.
std::int64_t flops_parallel(const ConvLayerSpec& layer, int h, int w);

/// 1/g + 1/k^2. Equals flops_parallel / flops_standard exactly for every
/// stride-1 same-padding layer. Values >= 1 (g = 1) mean no reduction.
Rational reduction_ratio(const ConvLayerSpec& layer);

struct LayerCost {
  std::string name;
  LayerSpec::Kind kind;
  int h = 0, w = 0;
  int in_channels = 0, out_channels = 0;
  int groups = 1;
  bool group_clamped = false;  // requested group size did not divide channels
  std::int64_t macs_standard = 0;
  std::int64_t macs_parallel = 0;
  std::int64_t params_standard = 0;
  std::int64_t params_parallel = 0;
  Rational reduction;  // conv layers only
};

struct CostReport {
  int input_h = 0, input_w = 0;
  int group_size = 0;
  std::vector<LayerCost> layers;
  std::int64_t total_macs_standard = 0;
  std::int64_t total_macs_parallel = 0;
  std::int64_t total_params_standard = 0;
  std::int64_t total_params_parallel = 0;
  // All-ops variants additionally count the accumulate of each MAC, branch
  // merges, and bias adds.
  std::int64_t total_ops_standard = 0;
  std::int64_t total_ops_parallel = 0;
};

/// Analytic per-layer and total cost of the chain, for both the standard
/// and the parallel variant of every conv layer.
CostReport cost_report(const NetworkSpec& spec);

std::string render_text(const CostReport& report);
std::string render_json(const CostReport& report);

}  // namespace parconv
