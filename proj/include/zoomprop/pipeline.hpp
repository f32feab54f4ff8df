#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "zoomprop/features.hpp"
#include "zoomprop/scnet.hpp"
#include "zoomprop/windows.hpp"

namespace zoomprop {

enum class Proposer { kCoarseSliding, kDenseSliding, kExternalFile };
std::string_view proposer_name(Proposer p);
Proposer parse_proposer(std::string_view name);

struct PipelineConfig {
  double zoom_threshold = 0.5;
  double conf_threshold = 0.001;
  int max_zoom_regions = 8;
  Proposer proposer = Proposer::kCoarseSliding;
  int grid = 4;
  double dedupe_iou = 0.95;
  bool zoom_enabled = true;
  // Set A when proposer == kExternalFile.
  std::vector<Box> external_proposals;

  void validate() const;
};

enum class Provenance { kACoarse, kBZoom, kCPredicted };
std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view name);

struct ScoredBox {
  Box box;
  double score;
  Provenance provenance;
  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

struct CostCounters {
  std::int64_t windows_generated = 0;
  std::int64_t rois_pooled = 0;
  std::int64_t scnet_evaluations = 0;
  std::int64_t zoom_regions_selected = 0;

  CostCounters& operator+=(const CostCounters& o);
  friend bool operator==(const CostCounters&, const CostCounters&) = default;
};

// Every decoded prediction of one image before thresholding, plus the
// intermediate sets. Thresholding is cheap and repeatable via finalize().
struct PipelineTrace {
  double image_width = 0, image_height = 0;
  std::vector<ScoredBox> candidates;  // decoded boxes scored by confidence
  std::vector<ScoredBox> set_a;       // score 1
  std::vector<ScoredBox> set_b;       // score = zoom indicator of the parent region
  std::vector<ScoredBox> zoom_regions;  // selected cover regions, score = u
  std::vector<double> cover_zoom;       // u for every cover region, in cover order
  CostCounters cost;
};

struct PipelineResult {
  std::vector<ScoredBox> proposals;  // set C
  PipelineTrace trace;
};

PipelineTrace evaluate_pipeline(const FeatureImage& feat, const Frame& image, const ScNetModel& model,
                                const PipelineConfig& cfg);
// Threshold at conf_threshold, then greedy IoU dedupe by descending score.
std::vector<ScoredBox> finalize(const PipelineTrace& trace, double conf_threshold, double dedupe_iou);

PipelineResult propose(const FeatureImage& feat, const Frame& image, const ScNetModel& model,
                       const PipelineConfig& cfg);

// Bounding-box prediction on every dense window, no zoom branch.
PipelineResult dense_baseline(const FeatureImage& feat, const Frame& image, const ScNetModel& model,
                              const PipelineConfig& cfg);

// Greedy: keep a box unless a kept box of higher (or equal, earlier) score
// overlaps it with IoU > threshold. Output sorted by descending score.
std::vector<ScoredBox> dedupe(std::vector<ScoredBox> boxes, double iou_threshold);

// Proposal CSV: image_id,x1,y1,x2,y2,score,provenance. The external input
// variant carries only image_id,x1,y1,x2,y2.
struct ProposalRow {
  std::string image_id;
  ScoredBox box;
};
std::string proposals_csv(const std::vector<ProposalRow>& rows);
void save_proposals(const std::vector<ProposalRow>& rows, const std::filesystem::path& path);
// Accepts either header; missing score/provenance read as 1 / C-predicted.
std::map<std::string, std::vector<ScoredBox>> load_proposals(const std::filesystem::path& path);

struct CounterRow {
  std::string image_id;
  CostCounters cost;
};
void save_counters(const std::vector<CounterRow>& rows, const std::filesystem::path& path);

}  // namespace zoomprop
