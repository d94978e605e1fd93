#include "parconv/cost.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "parconv/errors.hpp"

namespace parconv {

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
  if (den == 0) throw InvalidConfigError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
}

Rational Rational::operator+(const Rational& o) const {
  return Rational(num * o.den + o.num * den, den * o.den);
}

std::int64_t flops_standard(const ConvLayerSpec& layer, int h, int w) {
  return static_cast<std::int64_t>(h) * w * layer.d_k * layer.d_k * layer.d_m *
         layer.d_n;
}

std::int64_t flops_parallel(const ConvLayerSpec& layer, int h, int w) {
  if (layer.d_m % layer.groups != 0) {
    throw GroupError("groups " + std::to_string(layer.groups) +
                     " do not divide input channels " + std::to_string(layer.d_m));
  }
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  return hw * layer.d_k * layer.d_k * (layer.d_m / layer.groups) * layer.d_n +
         hw * layer.d_m * layer.d_n;
}

Rational reduction_ratio(const ConvLayerSpec& layer) {
  return Rational(1, layer.groups) +
         Rational(1, static_cast<std::int64_t>(layer.d_k) * layer.d_k);
}

namespace {

std::int64_t params_standard(const ConvLayerSpec& l) {
  std::int64_t p = static_cast<std::int64_t>(l.d_k) * l.d_k * l.d_m * l.d_n;
  if (l.bias) p += l.d_n;
  return p;
}

std::int64_t params_parallel(const ConvLayerSpec& l) {
  std::int64_t p = static_cast<std::int64_t>(l.d_k) * l.d_k *
                       (l.d_m / l.groups) * l.d_n +
                   static_cast<std::int64_t>(l.d_m) * l.d_n;
  if (l.bias) p += l.d_n;
  return p;
}

}  // namespace

CostReport cost_report(const NetworkSpec& spec) {
  spec.validate();

  CostReport report;
  report.input_h = spec.input_shape[1];
  report.input_w = spec.input_shape[2];
  report.group_size = spec.group_size;

  int h = spec.input_shape[1];
  int w = spec.input_shape[2];
  int channels = spec.input_shape[0];
  int conv_index = 0;
  int pool_index = 0;

  for (const LayerSpec& l : spec.layers) {
    LayerCost row;
    row.kind = l.kind;
    row.h = h;
    row.w = w;
    switch (l.kind) {
      case LayerSpec::Kind::kParallelConv: {
        ConvLayerSpec cs;
        cs.kind = ConvKind::kParallel;
        cs.d_k = spec.kernel_size;
        cs.d_m = channels;
        cs.d_n = l.out_channels;
        cs.groups = spec.effective_groups(channels, l.out_channels);
        cs.bias = spec.bias;

        row.name = "parallel_conv_" + std::to_string(++conv_index);
        row.in_channels = cs.d_m;
        row.out_channels = cs.d_n;
        row.groups = cs.groups;
        row.group_clamped = cs.groups != spec.group_size;
        row.macs_standard = flops_standard(cs, h, w);
        row.macs_parallel = flops_parallel(cs, h, w);
        row.params_standard = params_standard(cs);
        row.params_parallel = params_parallel(cs);
        row.reduction = reduction_ratio(cs);

        const std::int64_t hw = static_cast<std::int64_t>(h) * w;
        const std::int64_t bias_adds = cs.bias ? hw * cs.d_n : 0;
        report.total_ops_standard += 2 * row.macs_standard + bias_adds;
        // parallel additionally merges two branches per output value
        report.total_ops_parallel += 2 * row.macs_parallel + hw * cs.d_n + bias_adds;

        channels = l.out_channels;
        break;
      }
      case LayerSpec::Kind::kAvgPool:
        row.name = "avg_pool_" + std::to_string(++pool_index);
        row.in_channels = channels;
        row.out_channels = channels;
        h /= 2;
        w /= 2;
        break;
      case LayerSpec::Kind::kGlobalAvgPool:
        row.name = "global_avg_pool";
        row.in_channels = channels;
        row.out_channels = channels;
        break;
      case LayerSpec::Kind::kFullyConnected: {
        row.name = "fc";
        row.in_channels = channels;
        row.out_channels = spec.num_classes;
        const std::int64_t macs = static_cast<std::int64_t>(channels) * spec.num_classes;
        row.macs_standard = macs;
        row.macs_parallel = macs;
        row.params_standard = static_cast<std::int64_t>(channels) * spec.num_classes +
                              spec.num_classes;
        row.params_parallel = row.params_standard;
        report.total_ops_standard += 2 * macs + spec.num_classes;
        report.total_ops_parallel += 2 * macs + spec.num_classes;
        break;
      }
    }
    report.total_macs_standard += row.macs_standard;
    report.total_macs_parallel += row.macs_parallel;
    report.total_params_standard += row.params_standard;
    report.total_params_parallel += row.params_parallel;
    report.layers.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string render_text(const CostReport& report) {
  std::ostringstream os;
  char line[256];
  os << "cost report: input " << report.input_h << "x" << report.input_w
     << ", group size " << report.group_size << " (MACs; params)\n";
  std::snprintf(line, sizeof line, "%-18s %9s %4s %-11s %14s %12s %14s %12s %18s\n",
                "layer", "h x w", "g", "channels", "std MACs", "std params",
                "par MACs", "par params", "R (par/std)");
  os << line;
  for (const LayerCost& l : report.layers) {
    std::string dims = std::to_string(l.h) + "x" + std::to_string(l.w);
    std::string chan = std::to_string(l.in_channels) + "->" +
                       std::to_string(l.out_channels);
    std::string g = "-";
    std::string r = "-";
    if (l.kind == LayerSpec::Kind::kParallelConv) {
      g = std::to_string(l.groups) + (l.group_clamped ? "*" : "");
      r = fixed4(l.reduction.value()) + " (" + l.reduction.str() + ")";
      if (l.reduction.num >= l.reduction.den) r += " no reduction";
    }
    std::snprintf(line, sizeof line,
                  "%-18s %9s %4s %-11s %14lld %12lld %14lld %12lld %18s\n",
                  l.name.c_str(), dims.c_str(), g.c_str(), chan.c_str(),
                  static_cast<long long>(l.macs_standard),
                  static_cast<long long>(l.params_standard),
                  static_cast<long long>(l.macs_parallel),
                  static_cast<long long>(l.params_parallel), r.c_str());
    os << line;
  }
  std::snprintf(line, sizeof line,
                "%-18s %9s %4s %-11s %14lld %12lld %14lld %12lld %18s\n", "total",
                "", "", "", static_cast<long long>(report.total_macs_standard),
                static_cast<long long>(report.total_params_standard),
                static_cast<long long>(report.total_macs_parallel),
                static_cast<long long>(report.total_params_parallel),
                fixed4(static_cast<double>(report.total_macs_parallel) /
                       static_cast<double>(report.total_macs_standard))
                    .c_str());
  os << line;
  os << "totals: standard " << fixed4(report.total_params_standard / 1e6)
     << "M params / " << fixed4(report.total_macs_standard / 1e9)
     << " GMACs; parallel " << fixed4(report.total_params_parallel / 1e6)
     << "M params / " << fixed4(report.total_macs_parallel / 1e9) << " GMACs\n";
  if (std::any_of(report.layers.begin(), report.layers.end(),
                  [](const LayerCost& l) { return l.group_clamped; })) {
    os << "* group size clamped to 1 (requested size does not divide the "
          "channel counts)\n";
  }
  return os.str();
}

std::string render_json(const CostReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerCost& l : report.layers) {
    nlohmann::json row{
        {"name", l.name},
        {"h", l.h},
        {"w", l.w},
        {"in_channels", l.in_channels},
        {"out_channels", l.out_channels},
        {"standard", {{"macs", l.macs_standard}, {"params", l.params_standard}}},
        {"parallel", {{"macs", l.macs_parallel}, {"params", l.params_parallel}}},
    };
    if (l.kind == LayerSpec::Kind::kParallelConv) {
      row["groups"] = l.groups;
      row["group_clamped"] = l.group_clamped;
      row["reduction"] = {{"num", l.reduction.num},
                          {"den", l.reduction.den},
                          {"value", l.reduction.value()}};
    }
    layers.push_back(std::move(row));
  }
  const nlohmann::json j{
      {"input", {{"height", report.input_h}, {"width", report.input_w}}},
      {"group_size", report.group_size},
      {"layers", layers},
      {"totals",
       {{"standard",
         {{"macs", report.total_macs_standard},
          {"params", report.total_params_standard},
          {"all_ops", report.total_ops_standard}}},
        {"parallel",
         {{"macs", report.total_macs_parallel},
          {"params", report.total_params_parallel},
          {"all_ops", report.total_ops_parallel}}}}},
  };
  return j.dump(2);
}

}  // namespace parconv
