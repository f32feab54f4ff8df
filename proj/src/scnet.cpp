#include "zoomprop/scnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "io_util.hpp"
#include "zoomprop/kernels.hpp"
#include "zoomprop/windows.hpp"

namespace zoomprop {

namespace {

constexpr double kProbFloor = 1e-7;

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double reported(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void affine(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
  const auto& k = kernels::active();
  for (int r = 0; r < layer.rows; ++r) {
    out[r] = k.dot(layer.row(r).data(), in.data(), static_cast<std::size_t>(layer.cols)) + layer.bias[r];
  }
}

// Gradient of an affine layer for one sample: dW += g x^T, db += g, and
// optionally d_in += W^T g.
void affine_backward(const DenseLayer& layer, std::span<const double> in, std::span<const double> g,
                     DenseLayer& grad, std::span<double> d_in) {
  const auto& k = kernels::active();
  const auto cols = static_cast<std::size_t>(layer.cols);
  for (int r = 0; r < layer.rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    grad.bias[r] += gr;
    k.axpy(gr, in.data(), grad.row(r).data(), cols);
    if (!d_in.empty()) k.axpy(gr, layer.row(r).data(), d_in.data(), cols);
  }
}

void glorot(DenseLayer& layer, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (layer.rows + layer.cols));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& w : layer.weights) w = dist(rng);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

}  // namespace

void ScNetConfig::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0 || num_patterns <= 0) throw ConfigError("network dimensions must be positive");
  if (batch_size <= 0 || images_per_batch <= 0) throw ConfigError("batch sizes must be positive");
  if (batch_size % images_per_batch != 0) throw ConfigError("batch_size must be divisible by images_per_batch");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (!(learning_rate >= 0) || !(momentum >= 0 && momentum < 1) || !(weight_decay >= 0) ||
      !(delta_loss_weight >= 0)) {
    throw ConfigError("optimizer settings out of range");
  }
  if (!(min_positive_fraction >= 0 && min_positive_fraction <= 1)) {
    throw ConfigError("min_positive_fraction must lie in [0,1]");
  }
}

ScNetModel::ScNetModel(int input_dim, int hidden_dim, int num_patterns)
    : hidden1(hidden_dim, input_dim),
      hidden2(hidden_dim, hidden_dim),
      zoom(1, hidden_dim),
      conf(num_patterns, hidden_dim),
      delta(4 * num_patterns, hidden_dim) {
  if (input_dim <= 0 || hidden_dim <= 0 || num_patterns <= 0) {
    throw DimensionMismatch("network dimensions must be positive");
  }
}

ScNetModel ScNetModel::initialize(int input_dim, int hidden_dim, int num_patterns, std::uint64_t seed) {
  ScNetModel m(input_dim, hidden_dim, num_patterns);
  std::mt19937_64 rng(seed);
  for (DenseLayer* layer : m.layers()) glorot(*layer, rng);
  return m;
}

bool ScNetModel::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  for (const DenseLayer* l : layers()) {
    if (!std::all_of(l->weights.begin(), l->weights.end(), finite)) return false;
    if (!std::all_of(l->bias.begin(), l->bias.end(), finite)) return false;
  }
  return true;
}

void forward(const ScNetModel& model, std::span<const float> pooled, ForwardCache& cache, ScNetOutput& out) {
  if (pooled.size() != static_cast<std::size_t>(model.input_dim())) {
    std::ostringstream os;
    os << "pooled vector has " << pooled.size() << " values, model expects " << model.input_dim();
    throw DimensionMismatch(os.str());
  }
  const int hidden = model.hidden_dim();
  const int k = model.num_patterns();
  cache.input.assign(pooled.begin(), pooled.end());
  cache.hidden1.resize(hidden);
  cache.hidden2.resize(hidden);

  affine(model.hidden1, cache.input, cache.hidden1);
  kernels::relu(cache.hidden1);
  affine(model.hidden2, cache.hidden1, cache.hidden2);
  kernels::relu(cache.hidden2);

  double zoom_logit = 0.0;
  affine(model.zoom, cache.hidden2, std::span(&zoom_logit, 1));
  out.zoom_logit = zoom_logit;
  out.zoom = reported(sigmoid(zoom_logit));

  out.conf_logits.resize(k);
  out.conf.resize(k);
  affine(model.conf, cache.hidden2, out.conf_logits);
  for (int i = 0; i < k; ++i) out.conf[i] = reported(sigmoid(out.conf_logits[i]));

  std::vector<double> raw(4 * static_cast<std::size_t>(k));
  affine(model.delta, cache.hidden2, raw);
  out.deltas.resize(k);
  for (int i = 0; i < k; ++i) out.deltas[i] = {raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]};
}

ScNetOutput forward(const ScNetModel& model, std::span<const float> pooled) {
  ForwardCache cache;
  ScNetOutput out;
  forward(model, pooled, cache, out);
  return out;
}

ScNetLabels make_labels(const Box& roi, std::span<const Box> gts, const LabelRules& rules) {
  ScNetLabels labels;
  const Box* best = nullptr;
  double best_iou = -1.0;
  for (const Box& gt : gts) {
    if (roi.contains(gt) && gt.area() / roi.area() < rules.zoom_area_ratio) labels.zoom_label = 1;
    const double o = iou(roi, gt);
    if (o > best_iou) {
      best_iou = o;
      best = &gt;
    }
  }
  if (best != nullptr) {
    if (auto pattern = classify_overlap_pattern(roi, *best, rules.overlap)) {
      const int k = pattern->value();
      labels.pattern = pattern;
      labels.conf_labels[k] = 1;
      labels.delta_targets[k] = roi_relative_corners(roi, *best);
      labels.delta_weights[k] = 1;
    }
  }
  return labels;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (std::abs(x) < 1.0) return x;
  return x > 0 ? 1.0 : -1.0;
}

double binary_xent(double p, int label) {
  return label != 0 ? -std::log(p) : -std::log1p(-p);
}

double binary_xent_logit(double logit, int label) {
  return std::max(logit, 0.0) - (label != 0 ? logit : 0.0) + std::log1p(std::exp(-std::abs(logit)));
}

LossValue loss(const ScNetOutput& out, const ScNetLabels& labels, double delta_loss_weight) {
  const std::size_t k = out.conf_logits.size();
  if (labels.conf_labels.size() != k || labels.delta_weights.size() != k || labels.delta_targets.size() != k ||
      out.deltas.size() != k) {
    throw DimensionMismatch("output and label pattern counts differ");
  }
  if (!std::isfinite(out.zoom_logit)) throw NonFinite("zoom logit is not finite");

  LossValue lv;
  lv.grad.conf_logits.assign(k, 0.0);
  lv.grad.deltas.assign(4 * k, 0.0);

  lv.total += binary_xent_logit(out.zoom_logit, labels.zoom_label);
  lv.grad.zoom_logit = sigmoid(out.zoom_logit) - labels.zoom_label;

  for (std::size_t i = 0; i < k; ++i) {
    const double s = out.conf_logits[i];
    if (!std::isfinite(s)) throw NonFinite("confidence logit is not finite");
    lv.total += binary_xent_logit(s, labels.conf_labels[i]);
    lv.grad.conf_logits[i] = sigmoid(s) - labels.conf_labels[i];

    const auto pred = out.deltas[i].as_array();
    for (double v : pred) {
      if (!std::isfinite(v)) throw NonFinite("delta output is not finite");
    }
    if (labels.delta_weights[i] == 0) continue;
    const auto target = labels.delta_targets[i].as_array();
    for (int c = 0; c < 4; ++c) {
      const double diff = pred[c] - target[c];
      lv.total += delta_loss_weight * labels.delta_weights[i] * smooth_l1(diff);
      lv.grad.deltas[4 * i + c] = delta_loss_weight * labels.delta_weights[i] * smooth_l1_grad(diff);
    }
  }
  return lv;
}

ModelGradient::ModelGradient(const ScNetModel& like)
    : hidden1(like.hidden1.rows, like.hidden1.cols),
      hidden2(like.hidden2.rows, like.hidden2.cols),
      zoom(like.zoom.rows, like.zoom.cols),
      conf(like.conf.rows, like.conf.cols),
      delta(like.delta.rows, like.delta.cols) {}

void ModelGradient::clear() {
  for (DenseLayer* l : layers()) {
    std::fill(l->weights.begin(), l->weights.end(), 0.0);
    std::fill(l->bias.begin(), l->bias.end(), 0.0);
  }
}

void backward(const ScNetModel& model, const ForwardCache& cache, const OutputGradient& g, ModelGradient& grad) {
  const int hidden = model.hidden_dim();
  std::vector<double> d_h2(hidden, 0.0);
  affine_backward(model.zoom, cache.hidden2, std::span(&g.zoom_logit, 1), grad.zoom, d_h2);
  affine_backward(model.conf, cache.hidden2, g.conf_logits, grad.conf, d_h2);
  affine_backward(model.delta, cache.hidden2, g.deltas, grad.delta, d_h2);
  for (int i = 0; i < hidden; ++i) {
    if (!(cache.hidden2[i] > 0.0)) d_h2[i] = 0.0;
  }

  std::vector<double> d_h1(hidden, 0.0);
  affine_backward(model.hidden2, cache.hidden1, d_h2, grad.hidden2, d_h1);
  for (int i = 0; i < hidden; ++i) {
    if (!(cache.hidden1[i] > 0.0)) d_h1[i] = 0.0;
  }
  affine_backward(model.hidden1, cache.input, d_h1, grad.hidden1, {});
}

void TrainingImage::add(const PooledVector& pooled, ScNetLabels lab) {
  if (input_dim == 0) input_dim = static_cast<int>(pooled.values.size());
  if (pooled.values.size() != static_cast<std::size_t>(input_dim)) {
    throw DimensionMismatch("training sample length differs from image input_dim");
  }
  features.insert(features.end(), pooled.values.begin(), pooled.values.end());
  labels.push_back(std::move(lab));
}

namespace {

// k indices from [0, n): distinct when n >= k, otherwise drawn with replacement.
void draw_indices(std::size_t n, std::size_t k, std::mt19937_64& rng, std::vector<std::size_t>& scratch,
                  std::vector<std::size_t>& out) {
  if (n == 0 || k == 0) return;
  if (n >= k) {
    scratch.resize(n);
    std::iota(scratch.begin(), scratch.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(scratch[i], scratch[pick(rng)]);
      out.push_back(scratch[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(pick(rng));
  }
}

}  // namespace

TrainResult train(std::span<const TrainingImage> dataset, const ScNetConfig& cfg) {
  return train(dataset, cfg, ScNetModel::initialize(cfg));
}

TrainResult train(std::span<const TrainingImage> dataset, const ScNetConfig& cfg, ScNetModel model) {
  cfg.validate();
  if (model.input_dim() != cfg.input_dim || model.hidden_dim() != cfg.hidden_dim ||
      model.num_patterns() != cfg.num_patterns) {
    throw ModelMismatch("initial model shape does not match training config");
  }

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].size() == 0) continue;
    if (dataset[i].input_dim != cfg.input_dim) {
      throw DimensionMismatch("training image " + std::to_string(i) + " has input_dim " +
                              std::to_string(dataset[i].input_dim) + ", config expects " +
                              std::to_string(cfg.input_dim));
    }
    usable.push_back(i);
  }
  TrainResult result{std::move(model), {}};
  if (cfg.iterations == 0) return result;
  if (usable.size() < static_cast<std::size_t>(cfg.images_per_batch)) {
    throw InsufficientData("need at least " + std::to_string(cfg.images_per_batch) +
                           " images with RoIs, have " + std::to_string(usable.size()));
  }

  // Indices of samples with an assigned pattern, per image.
  std::vector<std::vector<std::size_t>> positives(dataset.size());
  for (std::size_t i : usable) {
    for (std::size_t s = 0; s < dataset[i].size(); ++s) {
      if (dataset[i].labels[s].pattern) positives[i].push_back(s);
    }
  }

  ScNetModel& m = result.model;
  ModelGradient grad(m);
  ModelGradient velocity(m);
  ForwardCache cache;
  ScNetOutput out;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto per_image = static_cast<std::size_t>(cfg.batch_size / cfg.images_per_batch);
  const auto min_pos = static_cast<std::size_t>(std::ceil(cfg.min_positive_fraction * per_image));
  std::vector<std::size_t> images, picks, scratch;
  result.loss_history.reserve(cfg.iterations);

  for (int it = 0; it < cfg.iterations; ++it) {
    grad.clear();
    images.clear();
    draw_indices(usable.size(), cfg.images_per_batch, rng, scratch, images);
    double batch_loss = 0.0;
    for (std::size_t slot : images) {
      const std::size_t img = usable[slot];
      const TrainingImage& data = dataset[img];
      picks.clear();
      std::size_t forced = 0;
      if (!positives[img].empty()) {
        forced = min_pos;
        std::vector<std::size_t> local;
        draw_indices(positives[img].size(), forced, rng, scratch, local);
        for (std::size_t p : local) picks.push_back(positives[img][p]);
      }
      draw_indices(data.size(), per_image - forced, rng, scratch, picks);
      for (std::size_t s : picks) {
        forward(m, data.sample(s), cache, out);
        const LossValue lv = loss(out, data.labels[s], cfg.delta_loss_weight);
        batch_loss += lv.total;
        backward(m, cache, lv.grad, grad);
      }
    }

    const double scale = 1.0 / static_cast<double>(cfg.batch_size);
    auto model_layers = m.layers();
    auto grad_layers = grad.layers();
    auto vel_layers = velocity.layers();
    for (std::size_t l = 0; l < model_layers.size(); ++l) {
      auto step = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v, double decay) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] - cfg.learning_rate * (g[i] * scale + decay * w[i]);
          w[i] += v[i];
        }
      };
      step(model_layers[l]->weights, grad_layers[l]->weights, vel_layers[l]->weights, cfg.weight_decay);
      step(model_layers[l]->bias, grad_layers[l]->bias, vel_layers[l]->bias, 0.0);
    }
    result.loss_history.push_back(batch_loss * scale);
  }
  return result;
}

std::vector<Box> training_rois(double image_width, double image_height, std::span<const Box> gts,
                               std::uint64_t seed, const RoiSamplingConfig& cfg) {
  const Frame frame(0, 0, image_width, image_height);
  std::vector<Box> rois;
  std::set<Box> seen;
  auto add = [&](const Box& b) {
    if (seen.insert(b).second) rois.push_back(b);
  };
  for (const Box& b : coarse_windows(frame)) add(b);

  std::vector<Box> fine_negatives;
  for (const Box& region : cover_regions(frame)) {
    add(region);
    if (make_labels(region, gts).zoom_label == 0) continue;
    std::vector<Box> fine;
    try {
      fine = coarse_windows(Frame::of(region));
    } catch (const EmptyResult&) {
      continue;
    }
    for (const Box& w : fine) {
      if (make_labels(w, gts).pattern) {
        add(w);
      } else {
        fine_negatives.push_back(w);
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::shuffle(fine_negatives.begin(), fine_negatives.end(), rng);
  if (fine_negatives.size() > static_cast<std::size_t>(cfg.fine_negatives)) {
    fine_negatives.erase(fine_negatives.begin() + cfg.fine_negatives, fine_negatives.end());
  }
  for (const Box& b : fine_negatives) add(b);

  std::uniform_real_distribution<double> jitter(-cfg.jitter_fraction, cfg.jitter_fraction);
  for (const Box& gt : gts) {
    add(gt);
    for (int j = 0; j < cfg.jitter_per_gt; ++j) {
      const double w = gt.width(), h = gt.height();
      const double x1 = gt.x1() + jitter(rng) * w, y1 = gt.y1() + jitter(rng) * h;
      const double x2 = gt.x2() + jitter(rng) * w, y2 = gt.y2() + jitter(rng) * h;
      if (!(x1 < x2 && y1 < y2)) continue;
      if (auto clipped = clip_to(Box(x1, y1, x2, y2), image_width, image_height)) add(*clipped);
    }
  }
  return rois;
}

TrainingImage build_training_image(const FeatureImage& feat, double image_width, double image_height,
                                   std::span<const Box> gts, int grid, std::uint64_t seed,
                                   const RoiSamplingConfig& cfg, const LabelRules& rules) {
  TrainingImage image;
  image.input_dim = feat.channels() * grid * grid;
  const auto rois = training_rois(image_width, image_height, gts, seed, cfg);
  image.features.reserve(rois.size() * image.input_dim);
  image.labels.reserve(rois.size());
  for (const Box& roi : rois) image.add(roi_pool(feat, roi, grid), make_labels(roi, gts, rules));
  return image;
}

namespace {
constexpr std::string_view kModelMagic = "SCNT";
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_model(const ScNetModel& model) {
  io::ByteWriter w;
  w.bytes(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.input_dim()));
  w.u32(static_cast<std::uint32_t>(model.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(model.num_patterns()));
  for (const DenseLayer* l : model.layers()) {
    w.u32(static_cast<std::uint32_t>(l->rows));
    w.u32(static_cast<std::uint32_t>(l->cols));
    for (double v : l->weights) w.f32(static_cast<float>(v));
    w.u32(static_cast<std::uint32_t>(l->rows));
    w.u32(1);
    for (double v : l->bias) w.f32(static_cast<float>(v));
  }
  return w.take();
}

ScNetModel decode_model(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "model file");
  if (r.bytes(4) != kModelMagic) throw FormatError("model file: bad magic");
  if (const auto v = r.u32(); v != kModelVersion) throw FormatError("model file: unsupported version " + std::to_string(v));
  const std::uint32_t input_dim = r.u32(), hidden_dim = r.u32(), k = r.u32();
  constexpr std::uint32_t kLimit = 1u << 20;
  if (input_dim == 0 || hidden_dim == 0 || k == 0 || input_dim > kLimit || hidden_dim > kLimit || k > kLimit) {
    throw FormatError("model file: invalid dimensions");
  }
  ScNetModel model(static_cast<int>(input_dim), static_cast<int>(hidden_dim), static_cast<int>(k));
  auto read_tensor = [&](std::vector<double>& dst, std::uint32_t rows, std::uint32_t cols) {
    if (r.u32() != rows || r.u32() != cols) throw FormatError("model file: tensor shape mismatch");
    for (auto& v : dst) v = r.f32();
  };
  for (DenseLayer* l : model.layers()) {
    read_tensor(l->weights, static_cast<std::uint32_t>(l->rows), static_cast<std::uint32_t>(l->cols));
    read_tensor(l->bias, static_cast<std::uint32_t>(l->rows), 1);
  }
  if (r.remaining() != 0) throw FormatError("model file: trailing bytes");
  if (!model.all_finite()) throw FormatError("model file: non-finite parameter");
  return model;
}

void save_model(const ScNetModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_model(model));
}

ScNetModel load_model(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return decode_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_loss_history(std::span<const double> history, const std::filesystem::path& path) {
  std::string text = "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, history[i]);
    text += buf;
  }
  io::write_text_atomic(path, text);
}

}  // namespace zoomprop
