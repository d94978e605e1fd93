#include "parconv/fog_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "parconv/errors.hpp"
#include "parconv/rng.hpp"

namespace parconv {

void DeviceProfile::validate() const {
  if (id.empty()) throw InvalidConfigError("device profile needs an id");
  if (c_time_per_frame_ms <= 0.0) {
    throw InvalidConfigError(id + ": c_time_per_frame_ms must be positive");
  }
  if (t_time_mean_ms < 0.0 || t_time_jitter_ms < 0.0) {
    throw InvalidConfigError(id + ": transmission times must be >= 0");
  }
  if (tier == Tier::kFog && (t_time_mean_ms != 0.0 || t_time_jitter_ms != 0.0)) {
    throw InvalidConfigError(id + ": fog devices have zero transmission time");
  }
}

SimResult simulate(const DeviceProfile& profile, const TaskSpec& task,
                   std::uint64_t seed) {
  profile.validate();
  if (task.n_frames < 1) throw InvalidConfigError("n_frames must be >= 1");

  double t = profile.t_time_mean_ms;
  if (profile.t_time_jitter_ms > 0.0) {
    Rng rng(Rng::mix_str(seed, profile.id));
    t = rng.uniform(profile.t_time_mean_ms - profile.t_time_jitter_ms,
                    profile.t_time_mean_ms + profile.t_time_jitter_ms);
  }
  SimResult r;
  r.device_id = profile.id;
  r.t_time_ms = t;
  r.c_time_ms = static_cast<double>(task.n_frames) * profile.c_time_per_frame_ms;
  r.total_ms = r.t_time_ms + r.c_time_ms;
  return r;
}

std::vector<std::pair<std::string, double>> rank_placements(
    const std::vector<DeviceProfile>& profiles, const TaskSpec& task,
    std::uint64_t seed, int trials) {
  if (profiles.empty()) throw ConfigError("rank_placements needs >= 1 profile");
  if (trials < 1) throw ConfigError("trials must be >= 1");

  std::vector<std::pair<std::string, double>> out;
  for (const DeviceProfile& p : profiles) {
    double sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      sum += simulate(p, task, Rng::mix(seed, static_cast<std::uint64_t>(trial)))
                 .total_ms;
    }
    out.emplace_back(p.id, sum / trials);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return out;
}

SweepTable sweep_frames(const std::vector<DeviceProfile>& profiles,
                        const std::vector<int>& frame_list, std::uint64_t seed,
                        int trials) {
  if (profiles.empty()) throw ConfigError("sweep_frames needs >= 1 profile");
  if (frame_list.empty()) throw ConfigError("sweep_frames needs >= 1 frame count");

  SweepTable table;
  table.frames = frame_list;
  for (const DeviceProfile& p : profiles) {
    table.device_ids.push_back(p.id);
    std::vector<double> row;
    for (const int frames : frame_list) {
      double sum = 0.0;
      for (int trial = 0; trial < trials; ++trial) {
        sum += simulate(p, TaskSpec{frames},
                        Rng::mix(seed, static_cast<std::uint64_t>(trial)))
                   .total_ms;
      }
      row.push_back(sum / trials);
    }
    table.mean_total_ms.push_back(std::move(row));
  }
  return table;
}

LocalTiming measure_local(Model& model, const Tensor& input, int repeats) {
  if (repeats < 3) throw InvalidConfigError("measure_local needs repeats >= 3");

  model.logits(input);  // warmup
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    model.logits(input);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }

  LocalTiming t;
  for (const double v : times) t.mean_ms += v;
  t.mean_ms /= repeats;
  double ss = 0.0;
  for (const double v : times) ss += (v - t.mean_ms) * (v - t.mean_ms);
  t.std_ms = std::sqrt(ss / (repeats - 1));
  return t;
}

DeviceProfile profile_from_measurement(const std::string& id,
                                       const LocalTiming& timing, int n_frames) {
  if (n_frames < 1) throw InvalidConfigError("n_frames must be >= 1");
  DeviceProfile p;
  p.id = id;
  p.tier = Tier::kFog;
  p.c_time_per_frame_ms = timing.mean_ms / n_frames;
  p.validate();
  return p;
}

std::vector<DeviceProfile> default_profiles() {
  // Per-frame compute times are the published 10-frame times divided by 10
  // in double precision, so a 10-frame task reproduces them exactly.
  return {
      {"cloud-cpu", Tier::kCloud, 560.0, 20.0, 14.37 / 10.0},
      {"cloud-gpu", Tier::kCloud, 560.0, 20.0, 9.62 / 10.0},
      {"fog-pi-npu", Tier::kFog, 0.0, 0.0, 13.36 / 10.0},
      {"fog-rk3399pro", Tier::kFog, 0.0, 0.0, 11.68 / 10.0},
  };
}

std::vector<DeviceProfile> load_profiles(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open profile pack " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad JSON: " + e.what());
  }
  if (!j.is_array()) throw FormatError(path + ": expected a JSON array");

  std::vector<DeviceProfile> out;
  for (const auto& item : j) {
    DeviceProfile p;
    try {
      p.id = item.at("id").get<std::string>();
      const std::string tier = item.at("tier").get<std::string>();
      if (tier == "cloud") {
        p.tier = Tier::kCloud;
      } else if (tier == "fog") {
        p.tier = Tier::kFog;
      } else {
        throw FormatError(path + ": unknown tier \"" + tier + "\"");
      }
      p.t_time_mean_ms = item.value("t_time_mean_ms", 0.0);
      p.t_time_jitter_ms = item.value("t_time_jitter_ms", 0.0);
      p.c_time_per_frame_ms = item.at("c_time_per_frame_ms").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    p.validate();
    out.push_back(std::move(p));
  }
  if (out.empty()) throw ConfigError(path + ": empty profile pack");
  return out;
}

void save_profiles(const std::vector<DeviceProfile>& profiles,
                   const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const DeviceProfile& p : profiles) {
    j.push_back({{"id", p.id},
                 {"tier", p.tier == Tier::kCloud ? "cloud" : "fog"},
                 {"t_time_mean_ms", p.t_time_mean_ms},
                 {"t_time_jitter_ms", p.t_time_jitter_ms},
                 {"c_time_per_frame_ms", p.c_time_per_frame_ms}});
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << '\n';
}

std::string render_ranking_text(
    const std::vector<std::pair<std::string, double>>& ranking) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%4s  %-16s %14s\n", "rank", "device",
                "mean total ms");
  os << line;
  int rank = 0;
  for (const auto& [id, mean] : ranking) {
    std::snprintf(line, sizeof line, "%4d  %-16s %14.4f\n", ++rank, id.c_str(),
                  mean);
    os << line;
  }
  return os.str();
}

std::string render_ranking_json(
    const std::vector<std::pair<std::string, double>>& ranking) {
  nlohmann::json j = nlohmann::json::array();
  int rank = 0;
  for (const auto& [id, mean] : ranking) {
    j.push_back({{"rank", ++rank}, {"device", id}, {"mean_total_ms", mean}});
  }
  return j.dump(2);
}

std::string render_sweep_text(const SweepTable& table) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-16s", "device \\ frames");
  os << buf;
  for (const int f : table.frames) {
    std::snprintf(buf, sizeof buf, " %12d", f);
    os << buf;
  }
  os << '\n';
  for (std::size_t d = 0; d < table.device_ids.size(); ++d) {
    std::snprintf(buf, sizeof buf, "%-16s", table.device_ids[d].c_str());
    os << buf;
    for (const double v : table.mean_total_ms[d]) {
      std::snprintf(buf, sizeof buf, " %12.4f", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string render_sweep_json(const SweepTable& table) {
  nlohmann::json devices = nlohmann::json::array();
  for (std::size_t d = 0; d < table.device_ids.size(); ++d) {
    devices.push_back({{"device", table.device_ids[d]},
                       {"mean_total_ms", table.mean_total_ms[d]}});
  }
  return nlohmann::json{{"frames", table.frames}, {"devices", devices}}.dump(2);
}

}  // namespace parconv
