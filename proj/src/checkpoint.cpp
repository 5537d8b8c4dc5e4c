#include "bootplace/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bootplace/image.hpp"

namespace bootplace {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void write_f32_le(std::ostream& os, double value) {
  const float f = static_cast<float>(value);
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  os.write(bytes, 4);
}

double read_f32_le(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  if (!is) throw CompatibilityError("checkpoint: weights file is shorter than the manifest");
  const uint32_t bits = static_cast<uint32_t>(bytes[0]) | (static_cast<uint32_t>(bytes[1]) << 8) |
                        (static_cast<uint32_t>(bytes[2]) << 16) |
                        (static_cast<uint32_t>(bytes[3]) << 24);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return static_cast<double>(f);
}

template <typename T>
T field(const json& j, const char* name) {
  if (!j.contains(name))
    throw CompatibilityError(std::string("checkpoint config: missing field \"") + name + "\"");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw CompatibilityError(std::string("checkpoint config: field \"") + name +
                             "\" has the wrong type");
  }
}

}  // namespace

json config_to_json(const ModelConfig& cfg) {
  return json{{"image_size", cfg.image_size},
              {"channels", cfg.channels},
              {"backbone_channels", cfg.backbone_channels},
              {"backbone_preset", cfg.backbone_preset},
              {"model_dim", cfg.model_dim},
              {"encoder_blocks", cfg.encoder_blocks},
              {"decoder_blocks", cfg.decoder_blocks},
              {"num_heads", cfg.num_heads},
              {"ffn_dim", cfg.ffn_dim},
              {"dropout", cfg.dropout},
              {"num_queries", cfg.num_queries},
              {"max_scene_objects", cfg.max_scene_objects},
              {"num_classes", cfg.num_classes},
              {"assoc_dim", cfg.assoc_dim},
              {"temperature", cfg.temperature},
              {"patch_size", cfg.patch_size},
              {"positive_correlation", cfg.positive_correlation},
              {"multiplicative_location_gating", cfg.multiplicative_location_gating}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.image_size = field<int>(j, "image_size");
  cfg.channels = field<int>(j, "channels");
  cfg.backbone_channels = field<std::vector<int>>(j, "backbone_channels");
  cfg.backbone_preset = field<std::string>(j, "backbone_preset");
  cfg.model_dim = field<int>(j, "model_dim");
  cfg.encoder_blocks = field<int>(j, "encoder_blocks");
  cfg.decoder_blocks = field<int>(j, "decoder_blocks");
  cfg.num_heads = field<int>(j, "num_heads");
  cfg.ffn_dim = field<int>(j, "ffn_dim");
  cfg.dropout = field<double>(j, "dropout");
  cfg.num_queries = field<int>(j, "num_queries");
  cfg.max_scene_objects = field<int>(j, "max_scene_objects");
  cfg.num_classes = field<int>(j, "num_classes");
  cfg.assoc_dim = field<int>(j, "assoc_dim");
  cfg.temperature = field<double>(j, "temperature");
  cfg.patch_size = field<int>(j, "patch_size");
  cfg.positive_correlation = field<bool>(j, "positive_correlation");
  cfg.multiplicative_location_gating = field<bool>(j, "multiplicative_location_gating");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CompatibilityError(std::string("checkpoint config: ") + e.what());
  }
  return cfg;
}

void save_checkpoint(const PlacementModel& model, const std::filesystem::path& dir,
                     int64_t train_step) {
  std::filesystem::create_directories(dir);

  json params = json::array();
  for (const auto& [name, tensor] : model.parameters().entries())
    params.push_back(json{{"name", name}, {"shape", tensor.shape()}});
  json manifest{{"format_version", kFormatVersion},
                {"train_step", train_step},
                {"config", config_to_json(model.config())},
                {"parameters", params}};

  std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw IoError("checkpoint: cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
  mf.close();
  if (!mf) throw IoError("checkpoint: failed writing " + (dir / "manifest.json").string());

  std::ofstream wf(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  if (!wf) throw IoError("checkpoint: cannot write " + (dir / "weights.bin").string());
  for (const auto& [name, tensor] : model.parameters().entries())
    for (double v : tensor.values()) write_f32_le(wf, v);
  wf.close();
  if (!wf) throw IoError("checkpoint: failed writing " + (dir / "weights.bin").string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw IoError("checkpoint: cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw CompatibilityError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
  }

  const int version = field<int>(manifest, "format_version");
  if (version != kFormatVersion)
    throw CompatibilityError("checkpoint: format version " + std::to_string(version) +
                             " is not supported (expected " + std::to_string(kFormatVersion) +
                             ")");
  if (!manifest.contains("config"))
    throw CompatibilityError("checkpoint: manifest has no config block");
  ModelConfig cfg = config_from_json(manifest.at("config"));
  const int64_t step = field<int64_t>(manifest, "train_step");

  LoadedCheckpoint out{PlacementModel(cfg, 0), step};

  if (!manifest.contains("parameters") || !manifest.at("parameters").is_array())
    throw CompatibilityError("checkpoint: manifest has no parameter list");
  const json& params = manifest.at("parameters");
  const auto& entries = out.model.parameters().entries();
  if (params.size() != entries.size())
    throw CompatibilityError("checkpoint: manifest lists " + std::to_string(params.size()) +
                             " parameters, model has " + std::to_string(entries.size()));
  size_t idx = 0;
  for (const auto& [name, tensor] : entries) {
    const json& p = params.at(idx++);
    if (field<std::string>(p, "name") != name)
      throw CompatibilityError("checkpoint: parameter order mismatch at \"" + name + "\"");
    if (field<diff::Shape>(p, "shape") != tensor.shape())
      throw CompatibilityError("checkpoint: shape mismatch for \"" + name + "\"");
  }

  std::ifstream wf(dir / "weights.bin", std::ios::binary);
  if (!wf) throw IoError("checkpoint: cannot open " + (dir / "weights.bin").string());
  for (const auto& [name, tensor] : entries) {
    (void)tensor;
    diff::Tensor handle = out.model.parameters().get(name);
    for (double& v : handle.values()) v = read_f32_le(wf);
  }
  wf.get();
  if (!wf.eof())
    throw CompatibilityError("checkpoint: weights file is longer than the manifest");
  return out;
}

}  // namespace bootplace
