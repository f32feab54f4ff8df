#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "zoomprop/pipeline.hpp"

namespace zoomprop {

enum class Matching { kExistence, kGreedyOneToOne };

// Fraction of gts hit by a proposal with IoU >= iou_min; 1.0 when gts is empty.
// Existence matching lets one proposal cover several gts; greedy one-to-one
// assigns pairs in descending IoU order.
double recall(std::span<const Box> proposals, std::span<const Box> gts, double iou_min = 0.5,
              Matching matching = Matching::kExistence);

// Area under the ROC curve (Mann-Whitney, ties count half). NaN when either
// class is missing.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

enum class Strategy {
  kScnetCoarse,   // zoom-gated pipeline with coarse sliding windows
  kScnetDense,    // bounding-box prediction on every dense window
  kDenseWindows,  // dense windows as proposals, no prediction
  kScnetExternal  // zoom-gated pipeline fed by external proposals
};
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct EvalImage {
  std::string image_id;
  FeatureImage features;
  Frame frame;
  std::vector<Box> gts;
  std::vector<Box> external_proposals;
};

struct CurvePoint {
  std::string strategy;
  double threshold = 0;
  double recall = 0;
  CostCounters cost;
  std::int64_t proposals_emitted = 0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

// Per-image pipeline trace for a strategy (cost does not depend on the
// confidence threshold).
PipelineTrace run_strategy(const EvalImage& image, const ScNetModel& model, const PipelineConfig& cfg,
                           Strategy strategy);

// One point per threshold, sorted by descending threshold. Recall is the mean
// over images; counters are summed.
std::vector<CurvePoint> sweep(std::span<const EvalImage> images, const ScNetModel& model, const PipelineConfig& cfg,
                              std::span<const double> thresholds, Strategy strategy, double iou_min = 0.5,
                              Matching matching = Matching::kExistence);

std::string curve_csv(std::span<const CurvePoint> points);
void save_curve(std::span<const CurvePoint> points, const std::filesystem::path& path);
std::vector<CurvePoint> parse_curve_csv(std::string_view text);
std::vector<CurvePoint> load_curve(const std::filesystem::path& path);

}  // namespace zoomprop
