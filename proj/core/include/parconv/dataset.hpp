#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace parconv {

/// The seven drum classes, in label-index order.
inline constexpr std::array<const char*, 7> kDrumLabels = {
    "tom", "kick", "snare", "closed_hat", "ride", "crash", "open_hat"};
inline constexpr int kNumClasses = 7;

/// Index for a label string; LabelError lists the valid set on miss.
int label_index(const std::string& label);
const char* label_name(int index);

enum class Split { kTrain, kVal };
Split split_from_string(const std::string& s);
const char* split_name(Split s);

struct ManifestEntry {
  std::string path;
  int label = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split_entries(Split s) const;
  std::array<int, kNumClasses> class_histogram(Split s) const;
};

/// Reads a JSON-lines manifest of {"path":, "label":, "split":}. Relative
/// paths resolve against the manifest's directory. Validation is fail-fast:
/// unknown labels raise LabelError, a path present in both splits raises
/// SplitError, and missing files raise IoError listing every missing path.
DatasetManifest load_dataset(const std::string& manifest_path);

void write_manifest(const DatasetManifest& manifest, const std::string& path);

/// Generates n_per_class WAVs per drum class with class-distinct spectral
/// signatures (see the synth table in dataset.cpp) into out_dir, returning
/// the manifest entries. Deterministic: each file's samples depend only on
/// (seed, split, label, index).
DatasetManifest synthesize_toy_dataset(int n_per_class, std::uint64_t seed,
                                       const std::string& out_dir,
                                       Split split = Split::kTrain);

}  // namespace parconv
