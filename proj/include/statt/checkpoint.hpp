#pragma once

#include <filesystem>

#include "statt/model.hpp"

namespace statt {

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
};

/// Writes `params.json` (names, shapes, byte offsets, model config) and
/// `params.bin` (row-major little-endian f32, concatenated in order).
void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& config, const ModelParams<float>& params);

/// Throws IoError on missing files or size mismatch, ConfigError on a bad
/// manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace statt
