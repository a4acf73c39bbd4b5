#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ewflow/mlp.hpp"

namespace ewflow {

// On disk: one JSON header line describing the architecture, parameter count
// and blob layout, then param_count little-endian float32 values.
struct Checkpoint {
  Mlp model;
  std::string meta_json = "{}";  // free-form metadata (role, path, beta_max, ...)
};

void save_checkpoint(const std::string& path, const Mlp& model, const std::string& meta_json = "{}");
Checkpoint load_checkpoint(const std::string& path);
// Throws std::runtime_error when the stored architecture differs from `expected`.
Checkpoint load_checkpoint(const std::string& path, const MlpSpec& expected);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace ewflow
