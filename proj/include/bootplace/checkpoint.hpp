#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "bootplace/model.hpp"

namespace bootplace {

// A checkpoint that exists but cannot be loaded into this build: wrong format
// version, unknown config fields, or a parameter list that does not match.
struct CompatibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);  // throws CompatibilityError

// Writes dir/manifest.json (format version, step, config echo, parameter
// names and shapes in store order) and dir/weights.bin (little-endian f32 in
// the same order). Byte-identical for identical weights: no timestamps.
void save_checkpoint(const PlacementModel& model, const std::filesystem::path& dir,
                     int64_t train_step);

struct LoadedCheckpoint {
  PlacementModel model;
  int64_t train_step = 0;
};

// Rebuilds the model from the manifest config and loads the weights.
// Throws IoError when files are missing or unreadable, CompatibilityError
// when they disagree with this build.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace bootplace
