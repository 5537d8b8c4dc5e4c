#include "bootplace/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "bootplace/model.hpp"

namespace bootplace {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint8_t clip8(double v) { return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

uint8_t jitter(Rng& rng, int base, int amount) {
  return clip8(base + rng.uniform_int(-amount, amount));
}

struct PixelRect {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};

// Shared with composite(): the rect a normalized box covers in pixels.
PixelRect box_to_rect(const Box& b, int size) {
  PixelRect r;
  r.w = static_cast<int>(std::lround(b.w * size));
  r.h = static_cast<int>(std::lround(b.h * size));
  r.x0 = static_cast<int>(std::lround((b.cx - b.w / 2.0) * size));
  r.y0 = static_cast<int>(std::lround((b.cy - b.h / 2.0) * size));
  return r;
}

// Inverse of box_to_rect: pixel-aligned boxes survive the round trip, so a
// target patch pasted back lands exactly where it was cut out.
Box rect_to_box(const PixelRect& r, int size) {
  return Box{(r.x0 + r.w / 2.0) / size, (r.y0 + r.h / 2.0) / size,
             static_cast<double>(r.w) / size, static_cast<double>(r.h) / size};
}

bool boxes_conflict(const Box& a, const Box& b, double margin) {
  return std::abs(a.cx - b.cx) < (a.w + b.w) / 2.0 + margin &&
         std::abs(a.cy - b.cy) < (a.h + b.h) / 2.0 + margin;
}

Image render_background(const SyntheticSceneConfig& cfg, Rng& rng) {
  const int s = cfg.image_size;
  Image img = Image::blank(s, s, 3);

  const int sky_rows = static_cast<int>(cfg.sky_end * s);
  const int building_rows = static_cast<int>(cfg.building_end * s);
  const int sidewalk_rows = static_cast<int>(cfg.sidewalk_end * s);

  const int sky_top[3] = {jitter(rng, 110, 20), jitter(rng, 155, 20), jitter(rng, 215, 20)};
  const int sky_bottom[3] = {jitter(rng, 185, 15), jitter(rng, 205, 15), jitter(rng, 235, 10)};
  for (int y = 0; y < sky_rows; ++y) {
    const double t = sky_rows > 1 ? static_cast<double>(y) / (sky_rows - 1) : 0.0;
    for (int x = 0; x < s; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = clip8(sky_top[c] + t * (sky_bottom[c] - sky_top[c]));
  }

  // Building fronts: vertical facades of varying width and tint, sparse
  // window grid with a few lit cells.
  int bx = 0;
  while (bx < s) {
    const int bw = rng.uniform_int(8, 16);
    const int tint = rng.uniform_int(-15, 15);
    const uint8_t wall[3] = {clip8(92 + tint), clip8(86 + tint), clip8(82 + tint)};
    for (int y = sky_rows; y < building_rows; ++y)
      for (int x = bx; x < std::min(bx + bw, s); ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = wall[c];
    for (int wy = sky_rows + 1; wy + 2 <= building_rows; wy += 4) {
      for (int wx = bx + 2; wx + 2 <= std::min(bx + bw, s); wx += 4) {
        const bool lit = rng.bernoulli(0.3);
        const uint8_t win[3] = {static_cast<uint8_t>(lit ? 214 : 48),
                                static_cast<uint8_t>(lit ? 192 : 48),
                                static_cast<uint8_t>(lit ? 112 : 56)};
        fill_rect(img, wx, wy, wx + 2, wy + 2, win);
      }
    }
    bx += bw;
  }

  // Both walkable bands get per-pixel speckle. Subtraction blurs it away, so
  // a hole reads as an oversmoothed patch the way a real inpaint does.
  const int walk = jitter(rng, 152, 10);
  for (int y = building_rows; y < sidewalk_rows; ++y)
    for (int x = 0; x < s; ++x) {
      const int n = rng.uniform_int(-7, 7);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clip8(walk + n - (c == 2 ? 4 : 0));
    }
  const uint8_t curb[3] = {104, 104, 104};
  fill_rect(img, 0, sidewalk_rows - 1, s, sidewalk_rows, curb);

  const int asphalt = jitter(rng, 56, 8);
  for (int y = sidewalk_rows; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const int n = rng.uniform_int(-9, 9);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clip8(asphalt + n + (c == 2 ? 3 : 0));
    }

  // Dashed separator midway between the two lanes.
  const int line_y = static_cast<int>(std::lround((cfg.lane_centers[0] + cfg.lane_centers[1]) / 2.0 * s));
  const uint8_t paint[3] = {205, 205, 195};
  for (int x = 0; x < s; ++x)
    if (x % 8 < 4) fill_rect(img, x, line_y, x + 1, line_y + 1, paint);

  return img;
}

Image make_vehicle_patch(int pw, int ph, Rng& rng) {
  Image patch = Image::blank(pw, ph, 4);
  static const int kPalette[][3] = {{182, 44, 44},   {52, 72, 172}, {44, 132, 64},
                                    {202, 172, 46},  {222, 222, 226}, {42, 42, 48}};
  const int* base = kPalette[rng.uniform_int(0, 5)];
  const uint8_t body[4] = {jitter(rng, base[0], 10), jitter(rng, base[1], 10),
                           jitter(rng, base[2], 10), 255};
  const uint8_t roof[4] = {clip8(body[0] * 0.8), clip8(body[1] * 0.8), clip8(body[2] * 0.8), 255};
  const uint8_t glass[4] = {jitter(rng, 142, 10), jitter(rng, 172, 10), jitter(rng, 200, 10), 255};
  const uint8_t tire[4] = {22, 22, 24, 255};

  const int wheel_r = std::max(1, static_cast<int>(std::lround(ph * 0.18)));
  fill_rect(patch, 0, static_cast<int>(ph * 0.30), pw, ph - wheel_r / 2, body);
  fill_rect(patch, static_cast<int>(pw * 0.22), static_cast<int>(ph * 0.04),
            static_cast<int>(pw * 0.78), static_cast<int>(ph * 0.34), roof);
  fill_rect(patch, static_cast<int>(pw * 0.28), static_cast<int>(ph * 0.10),
            static_cast<int>(pw * 0.72), static_cast<int>(ph * 0.30), glass);
  fill_ellipse(patch, pw * 0.22, ph - wheel_r, wheel_r, wheel_r, tire);
  fill_ellipse(patch, pw * 0.78, ph - wheel_r, wheel_r, wheel_r, tire);
  return patch;
}

Image make_pedestrian_patch(int pw, int ph, Rng& rng) {
  Image patch = Image::blank(pw, ph, 4);
  static const int kShirts[][3] = {
      {198, 62, 60}, {62, 92, 198}, {52, 142, 82}, {122, 62, 158}, {228, 228, 228}};
  const int* shirt_base = kShirts[rng.uniform_int(0, 4)];
  const uint8_t skin[4] = {jitter(rng, 224, 12), jitter(rng, 188, 12), jitter(rng, 158, 12), 255};
  const uint8_t shirt[4] = {jitter(rng, shirt_base[0], 12), jitter(rng, shirt_base[1], 12),
                            jitter(rng, shirt_base[2], 12), 255};
  const uint8_t pants[4] = {jitter(rng, 42, 8), jitter(rng, 42, 8), jitter(rng, 62, 8), 255};

  fill_rect(patch, static_cast<int>(pw * 0.30), static_cast<int>(ph * 0.24),
            static_cast<int>(std::ceil(pw * 0.70)), static_cast<int>(ph * 0.60), shirt);
  fill_rect(patch, static_cast<int>(pw * 0.32), static_cast<int>(ph * 0.60),
            static_cast<int>(pw * 0.47), ph, pants);
  fill_rect(patch, static_cast<int>(std::ceil(pw * 0.53)), static_cast<int>(ph * 0.60),
            static_cast<int>(std::ceil(pw * 0.68)), ph, pants);
  fill_ellipse(patch, pw * 0.50, ph * 0.13, std::max(1.0, pw * 0.22),
               std::max(1.0, ph * 0.12), skin);
  return patch;
}

Image make_object_patch(int class_id, int pw, int ph, Rng& rng) {
  return class_id == kClassVehicle ? make_vehicle_patch(pw, ph, rng)
                                   : make_pedestrian_patch(pw, ph, rng);
}

// Samples a class-consistent, pixel-aligned box that clears the already
// placed ones.
struct Placed {
  Box box;
  int class_id = 0;
};

Placed sample_placement(const SyntheticSceneConfig& cfg, Rng& rng,
                        const std::vector<Placed>& taken, uint64_t seed) {
  const int s = cfg.image_size;
  for (int attempt = 0; attempt < cfg.max_placement_attempts; ++attempt) {
    Placed p;
    p.class_id = rng.bernoulli(0.5) ? kClassVehicle : kClassPedestrian;
    double w, h, cx, cy;
    if (p.class_id == kClassVehicle) {
      w = rng.uniform(0.15, 0.28);
      h = w * rng.uniform(0.40, 0.55);
      cy = cfg.lane_centers[rng.uniform_int(0, 1)] + rng.uniform(-0.02, 0.02);
    } else {
      h = rng.uniform(0.12, 0.20);
      w = h * rng.uniform(0.30, 0.45);
      cy = rng.uniform(cfg.building_end + 0.01, cfg.sidewalk_end) - h / 2.0;
    }
    cx = rng.uniform(w / 2.0 + 0.02, 1.0 - w / 2.0 - 0.02);

    PixelRect r = box_to_rect(Box{cx, cy, w, h}, s);
    r.w = std::max(r.w, 3);
    r.h = std::max(r.h, 3);
    r.x0 = std::clamp(r.x0, 0, s - r.w);
    r.y0 = std::clamp(r.y0, 0, s - r.h);
    p.box = rect_to_box(r, s);

    if (!class_band_valid(cfg, p.class_id, p.box)) continue;
    bool clear = true;
    for (const Placed& q : taken)
      if (boxes_conflict(p.box, q.box, 0.01)) clear = false;
    if (clear) return p;
  }
  throw std::runtime_error("generate_scene: could not place an object after " +
                           std::to_string(cfg.max_placement_attempts) + " attempts (seed " +
                           std::to_string(seed) + ")");
}

// Blur plus bounded noise over the hole rect, expanded a little so the
// removal trace bleeds past the box edge the way real inpainting does.
void simulate_removal(Image& img, const Box& box, const SyntheticSceneConfig& cfg, Rng& rng) {
  PixelRect r = box_to_rect(box, cfg.image_size);
  const int pad = 2;
  const int x0 = std::max(0, r.x0 - pad), y0 = std::max(0, r.y0 - pad);
  const int x1 = std::min(img.width, r.x0 + r.w + pad);
  const int y1 = std::min(img.height, r.y0 + r.h + pad);
  if (x0 >= x1 || y0 >= y1) return;

  Image region = Image::blank(x1 - x0, y1 - y0, img.channels);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < img.channels; ++c) region.at(x - x0, y - y0, c) = img.at(x, y, c);
  region = gaussian_smooth(region, cfg.inpaint_sigma);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const int n = cfg.artifact_noise > 0 ? rng.uniform_int(-cfg.artifact_noise, cfg.artifact_noise) : 0;
      for (int c = 0; c < img.channels; ++c)
        img.at(x, y, c) = clip8(region.at(x - x0, y - y0, c) + n);
    }
}

json box_to_json(const Box& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw ParseError("annotation: " + where + " must be an array of four numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw ParseError("annotation: " + where + " must hold numbers");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

int class_from_json(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<int>() < 0)
    throw ParseError("annotation: " + where + " must be a non-negative integer");
  return j.get<int>();
}

}  // namespace

bool class_band_valid(const SyntheticSceneConfig& cfg, int class_id, const Box& box) {
  if (box.w <= 0.0 || box.h <= 0.0) return false;
  if (class_id == kClassVehicle) {
    return box.cy - box.h / 2.0 >= cfg.sidewalk_end - 0.03 &&
           box.cy + box.h / 2.0 <= 1.0 + 1e-9;
  }
  if (class_id == kClassPedestrian) {
    const double feet = box.cy + box.h / 2.0;
    return feet >= cfg.building_end - 0.015 && feet <= cfg.sidewalk_end + 0.03;
  }
  return false;
}

GeneratedScene generate_scene_with_source(const SyntheticSceneConfig& cfg, uint64_t seed) {
  if (cfg.image_size < 16) throw std::invalid_argument("generate_scene: image_size too small");
  if (cfg.min_targets < 1 || cfg.max_targets < cfg.min_targets)
    throw std::invalid_argument("generate_scene: bad target count range");
  if (cfg.min_context_objects < 0 || cfg.max_context_objects < cfg.min_context_objects)
    throw std::invalid_argument("generate_scene: bad context count range");

  Rng rng(seed);
  Image canvas = render_background(cfg, rng);

  const int n_context = rng.uniform_int(cfg.min_context_objects, cfg.max_context_objects);
  const int n_targets = rng.uniform_int(cfg.min_targets, cfg.max_targets);

  std::vector<Placed> taken;
  GeneratedScene out;
  for (int i = 0; i < n_context; ++i) {
    Placed p = sample_placement(cfg, rng, taken, seed);
    taken.push_back(p);
    PixelRect r = box_to_rect(p.box, cfg.image_size);
    Image patch = make_object_patch(p.class_id, r.w, r.h, rng);
    alpha_paste(canvas, patch, r.x0, r.y0);
    out.scene.scene_objects.push_back({p.box, p.class_id});
  }

  out.full_render = canvas;  // context already drawn
  out.scene.background = canvas;
  for (int i = 0; i < n_targets; ++i) {
    Placed p = sample_placement(cfg, rng, taken, seed);
    taken.push_back(p);
    PixelRect r = box_to_rect(p.box, cfg.image_size);
    Image patch = make_object_patch(p.class_id, r.w, r.h, rng);
    alpha_paste(out.full_render, patch, r.x0, r.y0);
    out.scene.targets.push_back({std::move(patch), p.box, p.class_id});
    out.scene.holes.push_back(p.box);
  }
  for (const Box& hole : out.scene.holes)
    simulate_removal(out.scene.background, hole, cfg, rng);
  return out;
}

Scene generate_scene(const SyntheticSceneConfig& cfg, uint64_t seed) {
  return generate_scene_with_source(cfg, seed).scene;
}

uint64_t dataset_scene_seed(uint64_t base_seed, int index) {
  return Rng::derive(base_seed, 0xDA7A5E7ull * 1000003ull + static_cast<uint64_t>(index))
      .next_u64();
}

Scene bootstrap_augment(const Scene& scene, Rng& rng) {
  const size_t t = scene.targets.size();
  if (t == 0) throw std::invalid_argument("bootstrap_augment: scene has no targets");

  // Uniform over all proper subsets: independent coin flips, full set
  // redrawn, so at least one target always remains.
  std::vector<char> paste_back;
  do {
    paste_back.assign(t, 0);
    for (auto& k : paste_back) k = rng.bernoulli(0.5) ? 1 : 0;
  } while (std::all_of(paste_back.begin(), paste_back.end(), [](char c) { return c != 0; }));

  Scene out;
  out.background = scene.background;
  out.scene_objects = scene.scene_objects;
  for (size_t i = 0; i < t; ++i) {
    const TargetObject& tgt = scene.targets[i];
    if (paste_back[i]) {
      out.background = composite(out.background, tgt.patch, tgt.box);
      out.scene_objects.push_back({tgt.box, tgt.class_id});
    } else {
      out.targets.push_back(tgt);
      out.holes.push_back(tgt.box);
    }
  }
  return out;
}

uint64_t enumerate_augmentations(int num_targets) {
  if (num_targets < 1)
    throw std::invalid_argument("enumerate_augmentations: need at least one target");
  if (num_targets > 62)
    throw std::invalid_argument("enumerate_augmentations: subset count overflows past 62 targets");
  return (uint64_t{1} << num_targets) - 1;
}

FloatImage gaussian_smooth(const FloatImage& src, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_smooth: sigma must be non-negative");
  if (sigma == 0.0 || src.width == 0 || src.height == 0) return src;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = src.width, h = src.height;
  FloatImage out = src;
  for (auto& plane : out.planes) {
    std::vector<double> tmp(plane.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * plane[static_cast<size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
        tmp[static_cast<size_t>(y) * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp[static_cast<size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
        plane[static_cast<size_t>(y) * w + x] = acc;
      }
  }
  return out;
}

Image gaussian_smooth(const Image& src, double sigma) {
  if (sigma == 0.0) return src;
  return gaussian_smooth(FloatImage::from(src), sigma).to_u8();
}

void save_dataset(const std::vector<Scene>& scenes, const fs::path& dir) {
  fs::create_directories(dir / "scenes");
  char id[8];
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    std::snprintf(id, sizeof(id), "%05zu", i);
    const fs::path sdir = dir / "scenes" / id;
    fs::create_directories(sdir / "objects");
    write_png((sdir / "background.png").string(), scene.background);

    json ann;
    ann["format_version"] = 1;
    ann["image_size"] = scene.background.width;
    ann["scene_objects"] = json::array();
    for (const SceneObject& o : scene.scene_objects)
      ann["scene_objects"].push_back(json{{"box", box_to_json(o.box)}, {"class", o.class_id}});
    ann["targets"] = json::array();
    for (size_t k = 0; k < scene.targets.size(); ++k) {
      const TargetObject& t = scene.targets[k];
      const std::string rel = "objects/" + std::to_string(k) + ".png";
      write_png((sdir / rel).string(), t.patch);
      ann["targets"].push_back(
          json{{"patch", rel}, {"box", box_to_json(t.box)}, {"class", t.class_id}});
    }
    ann["holes"] = json::array();
    for (const Box& hole : scene.holes) ann["holes"].push_back(box_to_json(hole));

    std::ofstream f(sdir / "annotation.json", std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save_dataset: cannot write " + (sdir / "annotation.json").string());
    f << ann.dump(2) << "\n";
  }
}

Scene load_scene(const fs::path& sdir) {
  const std::string label = sdir.filename().string();
  std::ifstream f(sdir / "annotation.json", std::ios::binary);
  if (!f) throw IoError("load_scene: cannot open " + (sdir / "annotation.json").string());
  json ann;
  try {
    f >> ann;
  } catch (const json::exception& e) {
    throw ParseError("annotation: scene " + label + " is not valid JSON: " + e.what());
  }

  if (!ann.contains("format_version") || !ann["format_version"].is_number_integer())
    throw ParseError("annotation: scene " + label + " lacks format_version");
  const int version = ann["format_version"].get<int>();
  if (version != 1)
    throw VersionError("annotation: scene " + label + " uses format version " +
                       std::to_string(version) + "; this build reads version 1");
  if (!ann.contains("image_size") || !ann["image_size"].is_number_integer())
    throw ParseError("annotation: scene " + label + " lacks image_size");
  const int size = ann["image_size"].get<int>();

  Scene scene;
  scene.background = read_png((sdir / "background.png").string());
  if (scene.background.width != size || scene.background.height != size)
    throw ParseError("annotation: scene " + label + " image_size " + std::to_string(size) +
                     " does not match background.png");

  for (const char* key : {"scene_objects", "targets", "holes"})
    if (!ann.contains(key) || !ann[key].is_array())
      throw ParseError("annotation: scene " + label + " lacks the " + key + " list");

  int idx = 0;
  for (const json& o : ann["scene_objects"]) {
    const std::string where = "scene_objects[" + std::to_string(idx++) + "]";
    if (!o.contains("box") || !o.contains("class"))
      throw ParseError("annotation: " + where + " needs box and class");
    scene.scene_objects.push_back(
        {box_from_json(o["box"], where + ".box"), class_from_json(o["class"], where + ".class")});
  }
  idx = 0;
  for (const json& o : ann["targets"]) {
    const std::string where = "targets[" + std::to_string(idx++) + "]";
    if (!o.contains("patch") || !o.contains("box") || !o.contains("class"))
      throw ParseError("annotation: " + where + " needs patch, box and class");
    if (!o["patch"].is_string())
      throw ParseError("annotation: " + where + ".patch must be a path string");
    const std::string rel = o["patch"].get<std::string>();
    if (rel.find("..") != std::string::npos || rel.empty() || rel.front() == '/')
      throw ParseError("annotation: " + where + ".patch must stay inside the scene directory");
    TargetObject t;
    t.patch = read_png((sdir / rel).string());
    t.box = box_from_json(o["box"], where + ".box");
    t.class_id = class_from_json(o["class"], where + ".class");
    scene.targets.push_back(std::move(t));
  }
  idx = 0;
  for (const json& h : ann["holes"])
    scene.holes.push_back(box_from_json(h, "holes[" + std::to_string(idx++) + "]"));

  return scene;
}

std::vector<Scene> load_dataset(const fs::path& dir) {
  const fs::path root = dir / "scenes";
  if (!fs::is_directory(root)) throw IoError("load_dataset: no scenes directory in " + dir.string());

  std::vector<fs::path> sdirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) sdirs.push_back(entry.path());
  std::sort(sdirs.begin(), sdirs.end());

  std::vector<Scene> scenes;
  scenes.reserve(sdirs.size());
  for (const fs::path& sdir : sdirs) scenes.push_back(load_scene(sdir));
  return scenes;
}

}  // namespace bootplace
