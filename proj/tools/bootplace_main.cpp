#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bootplace/checkpoint.hpp"
#include "bootplace/data.hpp"
#include "bootplace/eval.hpp"
#include "bootplace/hashing.hpp"
#include "bootplace/model.hpp"
#include "bootplace/rng.hpp"
#include "bootplace/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bootplace;

namespace {

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCompat = 4;
constexpr int kExitIo = 5;

std::string utc_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::tm g{};
  gmtime_r(&t, &g);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &g);
  return buf;
}

// Every command drops one of these next to its outputs so a run can be
// reproduced: the command, its effective settings, the seed, and content ids
// of everything it read and wrote.
struct RunManifest {
  std::string command;
  json config = json::object();
  uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  std::string started;
};

void add_input(RunManifest& m, const std::string& label, const fs::path& path,
               const std::string& hash) {
  m.inputs[label] = {{"path", path.string()}, {"hash", hash}};
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  json j{{"command", m.command}, {"config", m.config},   {"seed", m.seed},
         {"inputs", m.inputs},   {"outputs", m.outputs}, {"started_utc", m.started},
         {"finished_utc", utc_now()}};
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------------------
// Scene-config files: one `key = value` per line, '#' starts a comment.

[[noreturn]] void config_fail(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config: field '" + field + "' " + why);
}

double parse_number(const std::string& field, const std::string& text) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    config_fail(field, "needs a number, got '" + text + "'");
  }
  if (used != text.size()) config_fail(field, "needs a number, got '" + text + "'");
  return v;
}

int parse_int(const std::string& field, const std::string& text) {
  const double v = parse_number(field, text);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) config_fail(field, "needs an integer, got '" + text + "'");
  return i;
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void apply_scene_config_line(SyntheticSceneConfig& cfg, const std::string& key,
                             const std::string& value) {
  if (key == "image_size")
    cfg.image_size = parse_int(key, value);
  else if (key == "min_targets")
    cfg.min_targets = parse_int(key, value);
  else if (key == "max_targets")
    cfg.max_targets = parse_int(key, value);
  else if (key == "min_context_objects")
    cfg.min_context_objects = parse_int(key, value);
  else if (key == "max_context_objects")
    cfg.max_context_objects = parse_int(key, value);
  else if (key == "inpaint_sigma")
    cfg.inpaint_sigma = parse_number(key, value);
  else if (key == "artifact_noise")
    cfg.artifact_noise = parse_int(key, value);
  else if (key == "max_placement_attempts")
    cfg.max_placement_attempts = parse_int(key, value);
  else if (key == "sky_end")
    cfg.sky_end = parse_number(key, value);
  else if (key == "building_end")
    cfg.building_end = parse_number(key, value);
  else if (key == "sidewalk_end")
    cfg.sidewalk_end = parse_number(key, value);
  else if (key == "lane_center0")
    cfg.lane_centers[0] = parse_number(key, value);
  else if (key == "lane_center1")
    cfg.lane_centers[1] = parse_number(key, value);
  else
    throw std::invalid_argument("config: unknown field '" + key + "'");
}

SyntheticSceneConfig load_scene_config(const fs::path& file) {
  std::ifstream f(file);
  if (!f) throw IoError("cannot open config file " + file.string());
  SyntheticSceneConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    apply_scene_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void validate_scene_config(const SyntheticSceneConfig& cfg) {
  if (cfg.image_size < 8) config_fail("image_size", "must be at least 8");
  if (cfg.min_targets < 1) config_fail("min_targets", "must be at least 1");
  if (cfg.max_targets < cfg.min_targets) config_fail("max_targets", "must be >= min_targets");
  if (cfg.min_context_objects < 0) config_fail("min_context_objects", "must be >= 0");
  if (cfg.max_context_objects < cfg.min_context_objects)
    config_fail("max_context_objects", "must be >= min_context_objects");
  if (cfg.inpaint_sigma < 0.0) config_fail("inpaint_sigma", "must be >= 0");
  if (cfg.artifact_noise < 0) config_fail("artifact_noise", "must be >= 0");
  if (cfg.max_placement_attempts < 1) config_fail("max_placement_attempts", "must be >= 1");
  if (!(cfg.sky_end > 0.0 && cfg.sky_end < cfg.building_end))
    config_fail("sky_end", "must satisfy 0 < sky_end < building_end");
  if (!(cfg.building_end < cfg.sidewalk_end))
    config_fail("building_end", "must be below sidewalk_end");
  if (!(cfg.sidewalk_end < 1.0)) config_fail("sidewalk_end", "must be below 1");
  for (double lane : cfg.lane_centers)
    if (!(lane > cfg.sidewalk_end && lane < 1.0))
      config_fail("lane_center", "must lie between sidewalk_end and 1");
}

json scene_config_to_json(const SyntheticSceneConfig& cfg) {
  return {{"image_size", cfg.image_size},
          {"min_targets", cfg.min_targets},
          {"max_targets", cfg.max_targets},
          {"min_context_objects", cfg.min_context_objects},
          {"max_context_objects", cfg.max_context_objects},
          {"inpaint_sigma", cfg.inpaint_sigma},
          {"artifact_noise", cfg.artifact_noise},
          {"max_placement_attempts", cfg.max_placement_attempts},
          {"sky_end", cfg.sky_end},
          {"building_end", cfg.building_end},
          {"sidewalk_end", cfg.sidewalk_end},
          {"lane_center0", cfg.lane_centers[0]},
          {"lane_center1", cfg.lane_centers[1]}};
}

// ---------------------------------------------------------------------------
// Shared helpers.

uint64_t scene_seed(uint64_t base, int index) { return dataset_scene_seed(base, index); }

std::vector<int> parse_int_list(const std::string& flag, const std::string& text) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = trim(text.substr(pos, comma - pos));
    if (item.empty()) throw std::invalid_argument(flag + ": empty entry in '" + text + "'");
    out.push_back(parse_int(flag, item));
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument(flag + ": needs at least one value");
  return out;
}

std::vector<double> parse_double_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = trim(text.substr(pos, comma - pos));
    if (item.empty()) throw std::invalid_argument(flag + ": empty entry in '" + text + "'");
    out.push_back(parse_number(flag, item));
    pos = comma + 1;
  }
  return out;
}

Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out = Image::blank(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = img.channels == 1 ? img.at(x, y, 0) : img.at(x, y, c);
  return out;
}

Image to_rgba(const Image& img) {
  if (img.channels == 4) return img;
  Image out = Image::blank(img.width, img.height, 4, 255);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = img.channels == 1 ? img.at(x, y, 0) : img.at(x, y, c);
  return out;
}

void require_model_size(const char* what, int have, const ModelConfig& cfg) {
  if (have != cfg.image_size)
    throw CompatibilityError(std::string(what) + " is " + std::to_string(have) +
                             "px but the checkpoint expects " + std::to_string(cfg.image_size) +
                             "px images");
}

std::vector<Box> context_boxes(const Scene& scene) {
  std::vector<Box> boxes;
  for (const SceneObject& o : scene.scene_objects) boxes.push_back(o.box);
  return boxes;
}

json box_to_json(const Box& b) {
  return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}};
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out;
  int scenes = 0;
  uint64_t seed = 0;
  std::string config_file;
};

int run_gen_data(const GenDataArgs& a) {
  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.seed = a.seed;
  manifest.started = utc_now();

  SyntheticSceneConfig cfg;
  if (!a.config_file.empty()) {
    cfg = load_scene_config(a.config_file);
    add_input(manifest, "config", a.config_file, hash_file(a.config_file));
  }
  validate_scene_config(cfg);
  if (a.scenes < 1) throw std::invalid_argument("gen-data: --scenes must be at least 1");

  std::vector<Scene> scenes;
  scenes.reserve(a.scenes);
  for (int i = 0; i < a.scenes; ++i) scenes.push_back(generate_scene(cfg, scene_seed(a.seed, i)));

  const fs::path out(a.out);
  fs::create_directories(out);
  save_dataset(scenes, out);

  manifest.config = scene_config_to_json(cfg);
  manifest.config["scenes"] = a.scenes;
  manifest.outputs["scenes"] = {{"path", (out / "scenes").string()},
                                {"hash", hash_tree(out / "scenes")}};
  write_manifest(out / "run_manifest.json", manifest);
  std::printf("wrote %d scenes to %s\n", a.scenes, out.string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string preset = "desk";
  int64_t steps = -1;
  uint64_t seed = 0;
  std::string resume;
  double lr = -1.0;
  double backbone_lr = -1.0;
  int log_interval = -1;
  int checkpoint_interval = -1;
  bool no_augment = false;
  bool positive_correlation = false;
};

int run_train(const TrainArgs& a) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.seed = a.seed;
  manifest.started = utc_now();

  const std::vector<Scene> scenes = load_dataset(a.data);
  if (scenes.empty()) throw std::invalid_argument("train: dataset has no scenes");
  add_input(manifest, "data", a.data, hash_tree(fs::path(a.data) / "scenes"));

  std::optional<PlacementModel> model;
  int64_t start_step = 0;
  if (!a.resume.empty()) {
    LoadedCheckpoint lc = load_checkpoint(a.resume);
    add_input(manifest, "resume", a.resume, hash_tree(a.resume));
    start_step = lc.train_step;
    model.emplace(std::move(lc.model));
  } else {
    ModelConfig mcfg;
    if (a.preset == "desk")
      mcfg = ModelConfig::desk();
    else if (a.preset == "paper")
      mcfg = ModelConfig::paper();
    else
      throw std::invalid_argument("train: --preset must be desk or paper");
    mcfg.positive_correlation = a.positive_correlation;
    mcfg.validate();
    model.emplace(mcfg, a.seed);
  }
  require_model_size("train: dataset image", scenes[0].background.width, model->config());

  TrainConfig tc;
  tc.seed = a.seed;
  if (a.steps >= 0) tc.steps = a.steps;
  if (a.lr > 0.0) tc.lr = a.lr;
  if (a.backbone_lr > 0.0) tc.backbone_lr = a.backbone_lr;
  if (a.log_interval > 0) tc.log_interval = a.log_interval;
  if (a.checkpoint_interval > 0) tc.checkpoint_interval = a.checkpoint_interval;
  tc.augment = !a.no_augment;
  tc.validate();
  if (tc.steps < start_step)
    throw std::invalid_argument("train: --steps " + std::to_string(tc.steps) +
                                " is below the resumed step " + std::to_string(start_step));

  const fs::path out(a.out);
  fs::create_directories(out);
  TrainOptions opt;
  opt.metrics_path = out / "metrics.jsonl";
  opt.checkpoint_dir = out / "checkpoint";
  opt.start_step = start_step;

  const TrainResult result = train(*model, scenes, tc, opt);

  manifest.config = {{"model", config_to_json(model->config())},
                     {"preset", a.resume.empty() ? a.preset : "resumed"},
                     {"steps", tc.steps},
                     {"start_step", start_step},
                     {"lr", tc.lr},
                     {"backbone_lr", tc.backbone_lr},
                     {"augment", tc.augment},
                     {"log_interval", tc.log_interval},
                     {"checkpoint_interval", tc.checkpoint_interval}};
  // An early numeric abort can stop the run before the first checkpoint or
  // metrics row exists.
  if (fs::is_directory(opt.checkpoint_dir))
    manifest.outputs["checkpoint"] = {{"path", opt.checkpoint_dir.string()},
                                      {"hash", hash_tree(opt.checkpoint_dir)}};
  if (fs::is_regular_file(opt.metrics_path))
    manifest.outputs["metrics"] = {{"path", opt.metrics_path.string()},
                                   {"hash", hash_file(opt.metrics_path)}};
  manifest.outputs["steps_completed"] = result.steps_completed;
  manifest.outputs["aborted_nan"] = result.aborted_nan;
  write_manifest(out / "run_manifest.json", manifest);

  if (result.aborted_nan) {
    std::fprintf(stderr, "train: loss went non-finite; kept the last checkpoint\n");
    return kExitNumeric;
  }
  std::printf("trained to step %lld\n", static_cast<long long>(start_step + result.steps_completed));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string protocol = "repose";
  std::string ks = "1,5";
  std::string thresholds = "0.1,0.3,0.5,0.7,0.9";
  int diversity_k = 0;  // 0: min(5, num_queries)
  std::string out = "eval_report.json";
};

int run_eval(const EvalArgs& a) {
  RunManifest manifest;
  manifest.command = "eval";
  manifest.started = utc_now();

  const std::vector<Scene> scenes = load_dataset(a.data);
  if (scenes.empty()) throw std::invalid_argument("eval: dataset has no scenes");
  LoadedCheckpoint lc = load_checkpoint(a.ckpt);
  add_input(manifest, "data", a.data, hash_tree(fs::path(a.data) / "scenes"));
  add_input(manifest, "checkpoint", a.ckpt, hash_tree(a.ckpt));
  require_model_size("eval: dataset image", scenes[0].background.width, lc.model.config());

  const std::vector<int> ks = parse_int_list("--k", a.ks);
  const ModelRanker ranker(lc.model);

  EvalReport report;
  if (a.protocol == "repose") {
    const int dk =
        a.diversity_k > 0 ? a.diversity_k : std::min(5, lc.model.config().num_queries);
    report = evaluate_reposition(ranker, scenes, ks, dk);
  } else if (a.protocol == "place") {
    report = evaluate_placement(ranker, scenes, ks,
                                parse_double_list("--thresholds", a.thresholds));
  } else {
    throw std::invalid_argument("eval: --protocol must be repose or place");
  }

  const std::string text = to_json_string(report);
  std::fputs(text.c_str(), stdout);
  write_text(a.out, text);

  manifest.config = {{"protocol", a.protocol}, {"k", a.ks}, {"train_step", lc.train_step}};
  if (a.protocol == "place") manifest.config["thresholds"] = a.thresholds;
  manifest.outputs["report"] = {{"path", a.out}, {"hash", hash_file(a.out)}};
  write_manifest(fs::path(a.out).concat(".manifest.json"), manifest);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// place

struct PlaceArgs {
  std::string ckpt;
  std::string background;
  std::string objects;
  std::string policy = "greedy-distinct";
  std::string out;
};

int run_place(const PlaceArgs& a) {
  RunManifest manifest;
  manifest.command = "place";
  manifest.started = utc_now();

  LoadedCheckpoint lc = load_checkpoint(a.ckpt);
  const Image background = to_rgb(read_png(a.background));
  require_model_size("place: background", background.width, lc.model.config());
  if (background.height != background.width)
    throw CompatibilityError("place: background must be square");
  add_input(manifest, "checkpoint", a.ckpt, hash_tree(a.ckpt));
  add_input(manifest, "background", a.background, hash_file(a.background));

  std::vector<fs::path> object_files;
  if (!fs::is_directory(a.objects)) throw IoError("place: not a directory: " + a.objects);
  for (const auto& entry : fs::directory_iterator(a.objects))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      object_files.push_back(entry.path());
  std::sort(object_files.begin(), object_files.end());
  if (object_files.empty())
    throw std::invalid_argument("place: no .png objects in " + a.objects);

  std::vector<Image> patches;
  std::vector<ObjectQueryEmbedding> embeddings;
  for (const fs::path& p : object_files) {
    patches.push_back(to_rgba(read_png(p.string())));
    embeddings.push_back(lc.model.encode_object(patches.back()));
    add_input(manifest, "object:" + p.filename().string(), p, hash_file(p.string()));
  }

  const auto proposals = lc.model.detect(background, {});
  const auto decisions = lc.model.assign_objects(proposals, embeddings, a.policy);

  Image out_img = background;
  json entries = json::array();
  for (size_t i = 0; i < decisions.size(); ++i) {
    const PlacementDecision& d = decisions[i];
    if (d.placed) out_img = composite(out_img, patches[i], d.box);
    entries.push_back({{"object", object_files[i].filename().string()},
                       {"placed", d.placed},
                       {"proposal_index", d.proposal_index},
                       {"box", box_to_json(d.box)},
                       {"probability", d.probability}});
  }

  write_png(a.out, out_img);
  const fs::path json_path = fs::path(a.out).replace_extension(".json");
  write_text(json_path, json{{"policy", a.policy}, {"placements", entries}}.dump(2) + "\n");

  manifest.config = {{"policy", a.policy}, {"train_step", lc.train_step}};
  manifest.outputs["composite"] = {{"path", a.out}, {"hash", hash_file(a.out)}};
  manifest.outputs["placements"] = {{"path", json_path.string()}, {"hash", hash_file(json_path)}};
  write_manifest(fs::path(a.out).replace_extension(".manifest.json"), manifest);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// visualize

struct VisualizeArgs {
  std::string ckpt;
  std::string scene;
  std::string out;
};

int run_visualize(const VisualizeArgs& a) {
  RunManifest manifest;
  manifest.command = "visualize";
  manifest.started = utc_now();

  LoadedCheckpoint lc = load_checkpoint(a.ckpt);
  const Scene scene = load_scene(a.scene);
  require_model_size("visualize: scene image", scene.background.width, lc.model.config());
  add_input(manifest, "checkpoint", a.ckpt, hash_tree(a.ckpt));
  add_input(manifest, "scene", a.scene, hash_tree(a.scene));

  const fs::path out(a.out);
  fs::create_directories(out);
  const std::vector<Box> context = context_boxes(scene);
  const auto heatmaps = export_attention(lc.model, scene.background, context, out);

  const auto proposals = lc.model.detect(scene.background, context);
  Image overlay = scene.background;
  const uint8_t magenta[4] = {255, 0, 255, 255};
  const int size = overlay.width;
  for (const RegionProposal& p : proposals) {
    const int w = std::max<int>(1, static_cast<int>(std::lround(p.box.w * size)));
    const int h = std::max<int>(1, static_cast<int>(std::lround(p.box.h * size)));
    const int x0 = static_cast<int>(std::lround((p.box.cx - p.box.w / 2.0) * size));
    const int y0 = static_cast<int>(std::lround((p.box.cy - p.box.h / 2.0) * size));
    draw_rect_outline(overlay, x0, y0, x0 + w - 1, y0 + h - 1, magenta);
  }
  write_png((out / "overlay.png").string(), overlay);

  manifest.config = {{"train_step", lc.train_step}};
  manifest.outputs["heatmaps"] = static_cast<int>(heatmaps.size());
  manifest.outputs["overlay"] = {{"path", (out / "overlay.png").string()},
                                 {"hash", hash_file(out / "overlay.png")}};
  write_manifest(out / "run_manifest.json", manifest);
  std::printf("wrote %d heatmaps and overlay.png to %s\n", static_cast<int>(heatmaps.size()),
              out.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"object placement by detection: data generation, training, "
               "evaluation, placement, and attention visualization"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic street-scene dataset");
  gen_cmd->add_option("--out", gen.out, "output dataset directory")->required();
  gen_cmd->add_option("--scenes", gen.scenes, "number of scenes")->required();
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--config", gen.config_file, "key = value scene-config file");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a placement model");
  train_cmd->add_option("--data", tr.data, "dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "run output directory")->required();
  train_cmd->add_option("--preset", tr.preset, "model preset: desk or paper");
  train_cmd->add_option("--steps", tr.steps, "total optimization steps (absolute)");
  train_cmd->add_option("--seed", tr.seed, "initialization and shuffle seed");
  train_cmd->add_option("--resume", tr.resume, "checkpoint directory to continue from");
  train_cmd->add_option("--lr", tr.lr, "learning rate for non-backbone parameters");
  train_cmd->add_option("--backbone-lr", tr.backbone_lr, "learning rate for the backbone");
  train_cmd->add_option("--log-interval", tr.log_interval, "steps between metric rows");
  train_cmd->add_option("--checkpoint-interval", tr.checkpoint_interval,
                        "steps between checkpoint writes");
  train_cmd->add_flag("--no-augment", tr.no_augment, "disable bootstrapped re-compositing");
  train_cmd->add_flag("--positive-correlation", tr.positive_correlation,
                      "score regions by similarity instead of complementarity");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--data", ev.data, "dataset directory")->required();
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--protocol", ev.protocol, "repose or place");
  eval_cmd->add_option("--k", ev.ks, "comma-separated k values");
  eval_cmd->add_option("--thresholds", ev.thresholds,
                       "comma-separated IoU thresholds (place protocol)");
  eval_cmd->add_option("--diversity-k", ev.diversity_k,
                       "placements per object for diversity stats");
  eval_cmd->add_option("--out", ev.out, "report path");

  PlaceArgs pl;
  CLI::App* place_cmd = app.add_subcommand("place", "composite objects into a background");
  place_cmd->add_option("--ckpt", pl.ckpt, "checkpoint directory")->required();
  place_cmd->add_option("--background", pl.background, "background PNG")->required();
  place_cmd->add_option("--objects", pl.objects, "directory of object PNGs")->required();
  place_cmd->add_option("--policy", pl.policy, "independent or greedy-distinct");
  place_cmd->add_option("--out", pl.out, "composite PNG path")->required();

  VisualizeArgs vz;
  CLI::App* vis_cmd = app.add_subcommand("visualize", "attention heatmaps and proposal overlay");
  vis_cmd->add_option("--ckpt", vz.ckpt, "checkpoint directory")->required();
  vis_cmd->add_option("--scene", vz.scene, "scene directory")->required();
  vis_cmd->add_option("--out", vz.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_data(gen);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (place_cmd->parsed()) return run_place(pl);
    if (vis_cmd->parsed()) return run_visualize(vz);
  } catch (const CompatibilityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCompat;
  } catch (const VersionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCompat;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
