#include "zoomprop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "io_util.hpp"

namespace zoomprop {

using json = nlohmann::ordered_json;

std::string_view class_name(ObjectClass c) { return c == ObjectClass::kCar ? "car" : "person"; }

ObjectClass parse_class(std::string_view name) {
  if (name == "car") return ObjectClass::kCar;
  if (name == "person") return ObjectClass::kPerson;
  throw FormatError("unknown object class '" + std::string(name) + "'");
}

std::vector<Box> Scene::boxes() const {
  std::vector<Box> out;
  out.reserve(objects.size());
  for (const auto& o : objects) out.push_back(o.box);
  return out;
}

void SynthConfig::validate() const {
  if (min_width < 16 || min_height < 16 || max_width < min_width || max_height < min_height) {
    throw ConfigError("invalid image size range");
  }
  if (min_clusters < 0 || max_clusters < min_clusters || min_objects_per_cluster < 0 ||
      max_objects_per_cluster < min_objects_per_cluster || min_large < 0 || max_large < min_large) {
    throw ConfigError("invalid object count range");
  }
  if (!(small_side_min > 0 && small_side_max >= small_side_min && large_side_min > 0 &&
        large_side_max >= large_side_min && large_side_max <= 1)) {
    throw ConfigError("invalid object side range");
  }
  if (!(context_radius >= 0) || !(noise >= 0) || retry_budget <= 0) throw ConfigError("invalid synth parameters");
  if (channels < 6) throw ConfigError("renderer needs at least 6 channels");
  if (!(stride > 0)) throw ConfigError("renderer stride must be positive");
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

class Placer {
 public:
  Placer(Scene& scene, const SynthConfig& cfg, std::mt19937_64& rng) : scene_(scene), cfg_(cfg), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  // Box extent for a class given the longer side.
  std::pair<double, double> extent(ObjectClass cls, double side) {
    if (cls == ObjectClass::kCar) {
      const double aspect = uniform(1.4, 2.0);
      return {side, std::max(8.0, std::round(side / aspect))};
    }
    const double aspect = uniform(0.35, 0.6);
    return {std::max(8.0, std::round(side * aspect)), side};
  }

  // Tries to place an object centered near (cx, cy) +- spread; returns false
  // when the retry budget runs out.
  bool place(double side_lo, double side_hi, Point center, double spread) {
    const double shorter = std::min(scene_.width, scene_.height);
    for (int attempt = 0; attempt < cfg_.retry_budget; ++attempt) {
      const auto cls = uniform_int(0, 1) == 0 ? ObjectClass::kCar : ObjectClass::kPerson;
      const double side = std::max(8.0, std::round(uniform(side_lo, side_hi) * shorter));
      auto [w, h] = extent(cls, side);
      if (w > scene_.width || h > scene_.height) continue;
      double cx = center.x + (spread > 0 ? uniform(-spread, spread) : 0.0);
      double cy = center.y + (spread > 0 ? uniform(-spread, spread) : 0.0);
      double x1 = std::clamp(std::round(cx - w / 2), 0.0, scene_.width - w);
      double y1 = std::clamp(std::round(cy - h / 2), 0.0, scene_.height - h);
      Box b(x1, y1, x1 + w, y1 + h);
      const bool clash = std::any_of(scene_.objects.begin(), scene_.objects.end(),
                                     [&](const SceneObject& o) { return iou(o.box, b) > cfg_.max_pair_iou; });
      if (clash) continue;
      scene_.objects.push_back({b, cls});
      return true;
    }
    return false;
  }

 private:
  Scene& scene_;
  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
};

}  // namespace

Scene gen_scene(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Scene scene;
  Placer placer(scene, cfg, rng);
  scene.width = placer.uniform_int(cfg.min_width, cfg.max_width);
  scene.height = placer.uniform_int(cfg.min_height, cfg.max_height);
  const double shorter = std::min(scene.width, scene.height);
  const double radius = cfg.context_radius * shorter;

  const int clusters = placer.uniform_int(cfg.min_clusters, cfg.max_clusters);
  for (int c = 0; c < clusters; ++c) {
    const double margin = std::min(radius + cfg.small_side_max * shorter / 2, shorter / 2);
    const Point center{placer.uniform(margin, scene.width - margin), placer.uniform(margin, scene.height - margin)};
    scene.cluster_centers.push_back(center);
    const int n = placer.uniform_int(cfg.min_objects_per_cluster, cfg.max_objects_per_cluster);
    for (int i = 0; i < n; ++i) {
      if (!placer.place(cfg.small_side_min, cfg.small_side_max, center, radius)) {
        throw GenerationFailure("could not place small object " + std::to_string(i) + " of cluster " +
                                std::to_string(c) + " within the retry budget");
      }
    }
  }
  const int large = placer.uniform_int(cfg.min_large, cfg.max_large);
  for (int i = 0; i < large; ++i) {
    const Point anywhere{scene.width / 2.0, scene.height / 2.0};
    if (!placer.place(cfg.large_side_min, cfg.large_side_max, anywhere, std::max(scene.width, scene.height) / 2.0)) {
      throw GenerationFailure("could not place large object " + std::to_string(i) + " within the retry budget");
    }
  }
  return scene;
}

bool is_small_object(const Scene& scene, const Box& b, const SynthConfig& cfg) {
  const double shorter = std::min(scene.width, scene.height);
  return std::max(b.width(), b.height()) <= std::round(cfg.small_side_max * shorter);
}

FeatureImage render_features(const Scene& scene, int channels, float stride, double noise, std::uint64_t seed) {
  if (channels < 6) throw DimensionMismatch("renderer needs at least 6 channels, got " + std::to_string(channels));
  if (!(stride > 0) || scene.width <= 0 || scene.height <= 0) throw DimensionMismatch("invalid render geometry");
  const int fw = static_cast<int>(std::ceil(scene.width / static_cast<double>(stride)));
  const int fh = static_cast<int>(std::ceil(scene.height / static_cast<double>(stride)));
  FeatureImage feat(channels, fh, fw, stride);

  // Noise is drawn for every value in a fixed order so it does not depend on
  // the boxes.
  if (noise > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise);
    for (float& v : feat.data()) v = static_cast<float>(gauss(rng));
  }

  // A cell carries signal from the boxes whose center lies within 1.5 sides
  // of it (L-inf); the one with the nearest center wins, ties going to the
  // smaller box.
  const auto& objects = scene.objects;
  const std::size_t cells = static_cast<std::size_t>(fw) * fh;
  std::vector<int> owner(cells, -1);
  std::vector<double> owner_dist(cells, 0.0);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Box& b = objects[i].box;
    const double reach = 1.5 * std::max(b.width(), b.height());
    const int x_lo = std::max(0, static_cast<int>(std::floor((b.center_x() - reach) / stride - 0.5)));
    const int x_hi = std::min(fw - 1, static_cast<int>(std::ceil((b.center_x() + reach) / stride - 0.5)));
    const int y_lo = std::max(0, static_cast<int>(std::floor((b.center_y() - reach) / stride - 0.5)));
    const int y_hi = std::min(fh - 1, static_cast<int>(std::ceil((b.center_y() + reach) / stride - 0.5)));
    for (int y = y_lo; y <= y_hi; ++y) {
      const double py = (y + 0.5) * stride;
      for (int x = x_lo; x <= x_hi; ++x) {
        const double px = (x + 0.5) * stride;
        const double d = std::max(std::abs(px - b.center_x()), std::abs(py - b.center_y()));
        if (d > reach) continue;
        const std::size_t cell = static_cast<std::size_t>(y) * fw + x;
        const int cur = owner[cell];
        if (cur < 0 || d < owner_dist[cell] || (d == owner_dist[cell] && b.area() < objects[cur].box.area())) {
          owner[cell] = static_cast<int>(i);
          owner_dist[cell] = d;
        }
      }
    }
  }

  for (int y = 0; y < fh; ++y) {
    const double py = (y + 0.5) * stride;
    for (int x = 0; x < fw; ++x) {
      const int o = owner[static_cast<std::size_t>(y) * fw + x];
      if (o < 0) continue;
      const Box& b = objects[o].box;
      const double px = (x + 0.5) * stride;
      const double side = std::max(b.width(), b.height());
      const double d = std::max({b.x1() - px, 0.0, px - b.x2(), b.y1() - py, py - b.y2()});
      const double signal[6] = {
          d == 0.0 ? 1.0 : std::exp(-d / (0.25 * side)),
          std::clamp((b.x1() - px) / side, -2.0, 2.0),
          std::clamp((b.y1() - py) / side, -2.0, 2.0),
          std::clamp((b.x2() - px) / side, -2.0, 2.0),
          std::clamp((b.y2() - py) / side, -2.0, 2.0),
          std::log(side / stride),
      };
      for (int c = 0; c < 6; ++c) feat.at(c, y, x) += static_cast<float>(signal[c]);
    }
  }
  return feat;
}

std::string annotation_line(const Scene& scene) {
  json j;
  j["image_id"] = scene.image_id;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["boxes"] = json::array();
  for (const auto& o : scene.objects) {
    j["boxes"].push_back({{"x1", o.box.x1()},
                          {"y1", o.box.y1()},
                          {"x2", o.box.x2()},
                          {"y2", o.box.y2()},
                          {"class", std::string(class_name(o.cls))}});
  }
  return j.dump();
}

Scene parse_annotation_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    Scene s;
    s.image_id = j.at("image_id").get<std::string>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& b : j.at("boxes")) {
      Box box(b.at("x1").get<double>(), b.at("y1").get<double>(), b.at("x2").get<double>(), b.at("y2").get<double>());
      s.objects.push_back({box, parse_class(b.at("class").get<std::string>())});
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotation line: ") + e.what());
  } catch (const InvalidBox& e) {
    throw FormatError(std::string("annotation line: ") + e.what());
  }
}

void save_annotations(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
  std::string text;
  for (const auto& s : scenes) {
    text += annotation_line(s);
    text += '\n';
  }
  io::write_text_atomic(path, text);
}

std::vector<Scene> load_annotations(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  std::vector<Scene> scenes;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(parse_annotation_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return scenes;
}

std::string scene_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05d", index);
  return buf;
}

void write_dataset(const std::filesystem::path& dir, int count, std::uint64_t seed, const SynthConfig& cfg) {
  if (count < 0) throw ConfigError("count must be non-negative");
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const DatasetPaths paths{dir};

  std::vector<Scene> scenes;
  json ids = json::array();
  for (int i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    Scene s = gen_scene(cfg, scene_seed);
    s.image_id = scene_id(i);
    save_features(render_features(s, cfg.channels, cfg.stride, cfg.noise, mix_seed(scene_seed, 0xfea7)),
                  paths.features(s.image_id));
    ids.push_back(s.image_id);
    scenes.push_back(std::move(s));
  }
  save_annotations(scenes, paths.annotations());

  json manifest;
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["ids"] = ids;
  io::write_text_atomic(paths.manifest(), manifest.dump(2) + "\n");
}

std::vector<Scene> read_dataset_scenes(const std::filesystem::path& dir) {
  const DatasetPaths paths{dir};
  json manifest;
  try {
    manifest = json::parse(io::read_text(paths.manifest()));
  } catch (const json::exception& e) {
    throw FormatError(paths.manifest().string() + ": " + e.what());
  }
  auto scenes = load_annotations(paths.annotations());
  std::vector<Scene> ordered;
  for (const auto& id : manifest.at("ids")) {
    const auto name = id.get<std::string>();
    auto it = std::find_if(scenes.begin(), scenes.end(), [&](const Scene& s) { return s.image_id == name; });
    if (it == scenes.end()) throw FormatError("manifest id " + name + " has no annotation line");
    ordered.push_back(*it);
  }
  return ordered;
}

}  // namespace zoomprop
