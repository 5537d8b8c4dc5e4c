#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bootplace/geometry.hpp"
#include "bootplace/image.hpp"
#include "bootplace/rng.hpp"

namespace bootplace {

// Annotation that cannot be understood; the message names the offending
// file or field.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Annotation written by an unsupported format revision.
struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SceneObject {
  Box box;
  int class_id = 0;
};

// An object subtracted from the scene: its cut-out patch, where it used to
// sit, and what it is.
struct TargetObject {
  Image patch;  // RGBA
  Box box;
  int class_id = 0;
};

struct Scene {
  Image background;  // RGB; targets removed, removal traces left in place
  std::vector<SceneObject> scene_objects;
  std::vector<TargetObject> targets;
  std::vector<Box> holes;  // boxes the targets were removed from
};

inline constexpr int kClassVehicle = 0;
inline constexpr int kClassPedestrian = 1;

// Street-scene generator settings. The layout is horizontal bands: sky,
// building fronts, sidewalk, road (two lanes). Vehicles live on the road,
// pedestrians keep their feet on the sidewalk.
struct SyntheticSceneConfig {
  int image_size = 64;
  std::vector<std::string> class_names = {"vehicle", "pedestrian"};
  int min_targets = 1;
  int max_targets = 3;
  int min_context_objects = 1;
  int max_context_objects = 3;
  double inpaint_sigma = 1.5;  // blur applied where a target was removed
  int artifact_noise = 3;      // +- removal noise, 8-bit steps; kept below the
                               // band speckle so holes stay visibly smoother
  int max_placement_attempts = 200;

  // Band edges as fractions of image height.
  double sky_end = 0.30;
  double building_end = 0.45;
  double sidewalk_end = 0.55;
  double lane_centers[2] = {0.68, 0.86};
};

// Whether a box sits where its class belongs: vehicles fully on the road,
// pedestrian feet on the sidewalk. The generator only emits valid boxes and
// the evaluation uses the same rule.
bool class_band_valid(const SyntheticSceneConfig& cfg, int class_id, const Box& box);

struct GeneratedScene {
  Scene scene;
  // The same scene before subtraction: targets still drawn in, no removal
  // traces. Compositing a target back into scene.background reproduces this
  // inside the target box.
  Image full_render;
};

GeneratedScene generate_scene_with_source(const SyntheticSceneConfig& cfg, uint64_t seed);
Scene generate_scene(const SyntheticSceneConfig& cfg, uint64_t seed);

// Per-scene seed for scene number index of a dataset built from base_seed.
// Every producer of a multi-scene corpus derives seeds this way, so corpora
// with the same base seed are identical no matter which tool wrote them.
uint64_t dataset_scene_seed(uint64_t base_seed, int index);

// Draws a uniform proper subset of the targets back into the scene as
// context, leaving at least one target to place. With T targets there are
// 2^T - 1 distinct outcomes, all equally likely.
Scene bootstrap_augment(const Scene& scene, Rng& rng);

// Number of distinct augmented samples for a scene with num_targets targets.
uint64_t enumerate_augmentations(int num_targets);

// Separable gaussian blur with replicated edges; sigma 0 is the identity,
// negative sigma throws.
FloatImage gaussian_smooth(const FloatImage& src, double sigma);
Image gaussian_smooth(const Image& src, double sigma);

// Dataset layout under dir:
//   scenes/<id>/background.png
//   scenes/<id>/objects/<k>.png
//   scenes/<id>/annotation.json
// Writing is deterministic: the same scenes produce identical bytes.
void save_dataset(const std::vector<Scene>& scenes, const std::filesystem::path& dir);
std::vector<Scene> load_dataset(const std::filesystem::path& dir);
// Reads one scene directory (the layout above without the scenes/ prefix).
Scene load_scene(const std::filesystem::path& scene_dir);

}  // namespace bootplace
