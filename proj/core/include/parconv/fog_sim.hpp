#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "parconv/network.hpp"
#include "parconv/tensor.hpp"

namespace parconv {

enum class Tier { kCloud, kFog };

/// Per-device latency model: transmission time drawn uniformly from
/// mean +/- jitter (cloud only; fog devices transmit nothing) and compute
/// time linear in the frame count, calibrated per frame.
struct DeviceProfile {
  std::string id;
  Tier tier = Tier::kFog;
  double t_time_mean_ms = 0.0;
  double t_time_jitter_ms = 0.0;  // uniform half-width
  double c_time_per_frame_ms = 0.0;

  void validate() const;  // fog tier must have zero transmission time
};

struct TaskSpec {
  int n_frames = 10;
};

struct SimResult {
  std::string device_id;
  double t_time_ms = 0.0;
  double c_time_ms = 0.0;
  double total_ms = 0.0;  // always exactly t_time_ms + c_time_ms
};

/// One simulated placement. Pure given (profile, task, seed); with zero
/// jitter the seed does not matter at all.
SimResult simulate(const DeviceProfile& profile, const TaskSpec& task,
                   std::uint64_t seed);

/// Monte-Carlo mean total per device over `trials` runs, ascending.
/// Deterministic per seed; trial results are aggregated in fixed order.
std::vector<std::pair<std::string, double>> rank_placements(
    const std::vector<DeviceProfile>& profiles, const TaskSpec& task,
    std::uint64_t seed, int trials);

struct SweepTable {
  std::vector<int> frames;
  std::vector<std::string> device_ids;
  std::vector<std::vector<double>> mean_total_ms;  // [device][frame index]
};

/// Mean totals for every device at every frame count.
SweepTable sweep_frames(const std::vector<DeviceProfile>& profiles,
                        const std::vector<int>& frame_list, std::uint64_t seed,
                        int trials = 1);

struct LocalTiming {
  double mean_ms = 0.0;
  double std_ms = 0.0;  // sample standard deviation
};

/// Wall-clock forward-pass statistics: one untimed warmup run, then exactly
/// `repeats` timed runs.
LocalTiming measure_local(Model& model, const Tensor& input, int repeats);

/// Calibrates a fog-tier profile from a local measurement of an
/// n_frames-wide input.
DeviceProfile profile_from_measurement(const std::string& id,
                                       const LocalTiming& timing, int n_frames);

/// The four stock profiles: cloud-cpu, cloud-gpu, fog-pi-npu, fog-rk3399pro.
std::vector<DeviceProfile> default_profiles();

std::vector<DeviceProfile> load_profiles(const std::string& path);
void save_profiles(const std::vector<DeviceProfile>& profiles,
                   const std::string& path);

std::string render_ranking_text(
    const std::vector<std::pair<std::string, double>>& ranking);
std::string render_ranking_json(
    const std::vector<std::pair<std::string, double>>& ranking);
std::string render_sweep_text(const SweepTable& table);
std::string render_sweep_json(const SweepTable& table);

}  // namespace parconv
