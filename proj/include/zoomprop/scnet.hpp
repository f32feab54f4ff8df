#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "zoomprop/features.hpp"
#include "zoomprop/geometry.hpp"

namespace zoomprop {

struct ScNetConfig {
  int input_dim = 256;  // C * G * G of the pooling setup
  int hidden_dim = 64;
  int num_patterns = PatternIndex::kCount;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double delta_loss_weight = 1.0;  // lambda on the smooth-L1 term
  int batch_size = 128;
  int images_per_batch = 2;
  int iterations = 2000;
  // Lower bound on the share of each image's samples that carry a pattern.
  double min_positive_fraction = 0.25;
  std::uint64_t seed = 1;

  void validate() const;
};

// Row-major affine map: out = weights * in + bias.
struct DenseLayer {
  int rows = 0, cols = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(int out_dim, int in_dim)
      : rows(out_dim), cols(in_dim), weights(static_cast<std::size_t>(out_dim) * in_dim), bias(out_dim) {}

  std::span<const double> row(int r) const {
    return std::span<const double>(weights).subspan(static_cast<std::size_t>(r) * cols, cols);
  }
  std::span<double> row(int r) { return std::span<double>(weights).subspan(static_cast<std::size_t>(r) * cols, cols); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Two ReLU hidden layers feeding three heads: zoom (1, sigmoid),
// confidences (K, sigmoid) and corner deltas (4K, identity).
class ScNetModel {
 public:
  ScNetModel(int input_dim, int hidden_dim, int num_patterns);

  // Uniform Glorot init in [-a, a], a = sqrt(6 / (fan_in + fan_out)), zero biases.
  static ScNetModel initialize(int input_dim, int hidden_dim, int num_patterns, std::uint64_t seed);
  static ScNetModel initialize(const ScNetConfig& cfg) {
    return initialize(cfg.input_dim, cfg.hidden_dim, cfg.num_patterns, cfg.seed);
  }

  int input_dim() const { return hidden1.cols; }
  int hidden_dim() const { return hidden1.rows; }
  int num_patterns() const { return conf.rows; }

  // Fixed serialization order.
  std::vector<DenseLayer*> layers() { return {&hidden1, &hidden2, &zoom, &conf, &delta}; }
  std::vector<const DenseLayer*> layers() const { return {&hidden1, &hidden2, &zoom, &conf, &delta}; }

  bool all_finite() const;

  friend bool operator==(const ScNetModel&, const ScNetModel&) = default;

  DenseLayer hidden1, hidden2, zoom, conf, delta;
};

struct ScNetOutput {
  double zoom = 0.5;                 // reported probability, clamped to [1e-7, 1-1e-7]
  double zoom_logit = 0.0;
  std::vector<double> conf;          // K clamped probabilities
  std::vector<double> conf_logits;   // K
  std::vector<CornerDeltas> deltas;  // K
};

// Intermediate activations kept for backpropagation.
struct ForwardCache {
  std::vector<double> input, hidden1, hidden2;
};

ScNetOutput forward(const ScNetModel& model, std::span<const float> pooled);
inline ScNetOutput forward(const ScNetModel& model, const PooledVector& pooled) {
  return forward(model, pooled.values);
}
void forward(const ScNetModel& model, std::span<const float> pooled, ForwardCache& cache, ScNetOutput& out);

struct ScNetLabels {
  int zoom_label = 0;
  std::vector<int> conf_labels;            // K
  std::vector<CornerDeltas> delta_targets;  // K, zero where unassigned
  std::vector<int> delta_weights;           // K, at most one set
  std::optional<PatternIndex> pattern;

  explicit ScNetLabels(int num_patterns = PatternIndex::kCount)
      : conf_labels(num_patterns, 0), delta_targets(num_patterns), delta_weights(num_patterns, 0) {}
};

struct LabelRules {
  OverlapThresholds overlap{};
  double zoom_area_ratio = 0.1;  // contained object must be smaller than this share of the roi
};

ScNetLabels make_labels(const Box& roi, std::span<const Box> gts, const LabelRules& rules = {});

// Gradient of the loss with respect to the pre-activation head outputs: the
// zoom logit, the K confidence logits, and the 4K deltas (row k*4 + coord).
struct OutputGradient {
  double zoom_logit = 0.0;
  std::vector<double> conf_logits;
  std::vector<double> deltas;
};

struct LossValue {
  double total = 0.0;
  OutputGradient grad;
};

double smooth_l1(double x);
double smooth_l1_grad(double x);
// Cross-entropy of a probability against a binary label.
double binary_xent(double p, int label);
// Same loss as a function of the logit, in the overflow-free form.
double binary_xent_logit(double logit, int label);

LossValue loss(const ScNetOutput& out, const ScNetLabels& labels, double delta_loss_weight = 1.0);

// Per-parameter gradients, same shapes as the model.
struct ModelGradient {
  explicit ModelGradient(const ScNetModel& like);
  void clear();
  std::vector<DenseLayer*> layers() { return {&hidden1, &hidden2, &zoom, &conf, &delta}; }
  DenseLayer hidden1, hidden2, zoom, conf, delta;
};

// Accumulates d(loss)/d(params) for one sample into `grad`.
void backward(const ScNetModel& model, const ForwardCache& cache, const OutputGradient& g, ModelGradient& grad);

// One RoI of one training image: pooled features plus targets.
struct TrainingImage {
  int input_dim = 0;
  std::vector<float> features;  // rows of input_dim
  std::vector<ScNetLabels> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(features).subspan(i * input_dim, input_dim);
  }
  void add(const PooledVector& pooled, ScNetLabels lab);
};

struct TrainResult {
  ScNetModel model;
  std::vector<double> loss_history;  // mean batch loss per iteration
};

TrainResult train(std::span<const TrainingImage> dataset, const ScNetConfig& cfg);
// Continues from an existing model.
TrainResult train(std::span<const TrainingImage> dataset, const ScNetConfig& cfg, ScNetModel init);

// Training RoIs for one annotated image: coarse windows, cover regions,
// patterned fine windows inside cover regions that hold objects (plus a few
// unpatterned ones), ground-truth boxes and jittered copies of them.
struct RoiSamplingConfig {
  int jitter_per_gt = 4;
  double jitter_fraction = 0.25;
  int fine_negatives = 64;
};
std::vector<Box> training_rois(double image_width, double image_height, std::span<const Box> gts,
                               std::uint64_t seed, const RoiSamplingConfig& cfg = {});
TrainingImage build_training_image(const FeatureImage& feat, double image_width, double image_height,
                                   std::span<const Box> gts, int grid, std::uint64_t seed,
                                   const RoiSamplingConfig& cfg = {}, const LabelRules& rules = {});

// Model file: "SCNT", u32 version, u32 input_dim, u32 hidden_dim, u32 K, then
// per tensor u32 rows, u32 cols, f32 row-major values.
void save_model(const ScNetModel& model, const std::filesystem::path& path);
ScNetModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_model(const ScNetModel& model);
ScNetModel decode_model(std::span<const std::uint8_t> bytes);

void save_loss_history(std::span<const double> history, const std::filesystem::path& path);

}  // namespace zoomprop
