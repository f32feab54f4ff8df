#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zoomprop/features.hpp"
#include "zoomprop/geometry.hpp"

namespace zoomprop {

enum class ObjectClass { kCar, kPerson };
std::string_view class_name(ObjectClass c);
ObjectClass parse_class(std::string_view name);

struct SceneObject {
  Box box;
  ObjectClass cls;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Point {
  double x = 0, y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Scene {
  std::string image_id;
  int width = 0, height = 0;
  std::vector<SceneObject> objects;
  std::vector<Point> cluster_centers;  // not serialized

  std::vector<Box> boxes() const;
};

// Small objects gather around cluster centers; a few large objects are placed
// anywhere. Object sides are fractions of the image's shorter side and refer
// to the longer side of the box; the class sets the aspect ratio.
struct SynthConfig {
  int min_width = 2400, max_width = 2400;
  int min_height = 1800, max_height = 1800;
  int min_clusters = 2, max_clusters = 3;
  int min_objects_per_cluster = 2, max_objects_per_cluster = 4;
  double context_radius = 0.05;  // fraction of the shorter side
  double small_side_min = 1.0 / 64, small_side_max = 1.0 / 16;
  int min_large = 1, max_large = 2;
  double large_side_min = 1.0 / 8, large_side_max = 1.0 / 3;
  double max_pair_iou = 0.3;
  int retry_budget = 200;  // placement attempts per object

  // Renderer.
  int channels = 16;
  float stride = 16.0f;
  double noise = 0.1;

  void validate() const;
};

Scene gen_scene(const SynthConfig& cfg, std::uint64_t seed);

bool is_small_object(const Scene& scene, const Box& b, const SynthConfig& cfg);

// Channel 0 objectness, 1-4 corner offsets from the cell center in units of the
// box side (clipped to [-2,2]), 5 log(side / stride), the rest noise. Only
// cells within 1.5 sides of a box center carry signal; the closest box wins.
FeatureImage render_features(const Scene& scene, int channels, float stride, double noise, std::uint64_t seed);

// Derived per-item seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

// JSON-lines annotations, one scene per line.
std::string annotation_line(const Scene& scene);
Scene parse_annotation_line(std::string_view line);
void save_annotations(const std::vector<Scene>& scenes, const std::filesystem::path& path);
std::vector<Scene> load_annotations(const std::filesystem::path& path);

// On-disk dataset: annotations.jsonl, <image_id>.fimg per scene, manifest.json.
struct DatasetPaths {
  std::filesystem::path dir;
  std::filesystem::path annotations() const { return dir / "annotations.jsonl"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path features(const std::string& image_id) const { return dir / (image_id + ".fimg"); }
};

std::string scene_id(int index);
void write_dataset(const std::filesystem::path& dir, int count, std::uint64_t seed, const SynthConfig& cfg);
// Scenes listed by the manifest, in manifest order.
std::vector<Scene> read_dataset_scenes(const std::filesystem::path& dir);

}  // namespace zoomprop
