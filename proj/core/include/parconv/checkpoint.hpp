#pragma once

#include <string>

#include "parconv/network.hpp"

namespace parconv {

/// Checkpoint layout, all little-endian:
///   magic "PCNN" | u16 version | header (input shape, classes, group size,
///   kernel, bias flag, layer manifest) | float32 weights in manifest order
///   (per conv layer w3, w1, bias; then fc w, b).
/// Round-trips are bit-exact. Bad magic, version, truncation, or trailing
/// bytes raise FormatError and leave no partial model behind.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

inline constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace parconv
