#include "zoomprop/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "io_util.hpp"

namespace zoomprop {

double recall(std::span<const Box> proposals, std::span<const Box> gts, double iou_min, Matching matching) {
  if (!(iou_min > 0 && iou_min <= 1)) throw ConfigError("iou_min must lie in (0,1]");
  if (gts.empty()) return 1.0;
  std::size_t hit = 0;
  if (matching == Matching::kExistence) {
    for (const Box& g : gts) {
      if (std::any_of(proposals.begin(), proposals.end(), [&](const Box& p) { return iou(p, g) >= iou_min; })) ++hit;
    }
  } else {
    struct Pair {
      double overlap;
      std::size_t gt, prop;
    };
    std::vector<Pair> pairs;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      for (std::size_t p = 0; p < proposals.size(); ++p) {
        const double o = iou(proposals[p], gts[g]);
        if (o >= iou_min) pairs.push_back({o, g, p});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.overlap > b.overlap; });
    std::vector<char> gt_used(gts.size(), 0), prop_used(proposals.size(), 0);
    for (const Pair& pr : pairs) {
      if (gt_used[pr.gt] || prop_used[pr.prop]) continue;
      gt_used[pr.gt] = prop_used[pr.prop] = 1;
      ++hit;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(gts.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank-sum with mid-ranks for ties.
  double pos_rank_sum = 0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        pos_rank_sum += mid;
        ++pos;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1) / 2) / (p * n);
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kScnetCoarse:
      return "scnet_coarse_sliding";
    case Strategy::kScnetDense:
      return "scnet_dense_sliding";
    case Strategy::kDenseWindows:
      return "dense_sliding";
    case Strategy::kScnetExternal:
      return "scnet_external";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kScnetCoarse, Strategy::kScnetDense, Strategy::kDenseWindows, Strategy::kScnetExternal}) {
    if (strategy_name(s) == name) return s;
  }
  // Short aliases used by the CLI.
  if (name == "zoom") return Strategy::kScnetCoarse;
  if (name == "dense") return Strategy::kScnetDense;
  if (name == "windows") return Strategy::kDenseWindows;
  if (name == "external") return Strategy::kScnetExternal;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

PipelineTrace run_strategy(const EvalImage& image, const ScNetModel& model, const PipelineConfig& cfg,
                           Strategy strategy) {
  PipelineConfig c = cfg;
  switch (strategy) {
    case Strategy::kScnetCoarse:
      c.proposer = Proposer::kCoarseSliding;
      return evaluate_pipeline(image.features, image.frame, model, c);
    case Strategy::kScnetExternal:
      c.proposer = Proposer::kExternalFile;
      c.external_proposals = image.external_proposals;
      return evaluate_pipeline(image.features, image.frame, model, c);
    case Strategy::kScnetDense:
      return dense_baseline(image.features, image.frame, model, c).trace;
    case Strategy::kDenseWindows: {
      PipelineTrace t;
      t.image_width = image.frame.width;
      t.image_height = image.frame.height;
      for (const Box& w : dense_windows(image.frame)) {
        t.set_a.push_back({w, 1.0, Provenance::kACoarse});
        t.candidates.push_back({w, 1.0, Provenance::kACoarse});
      }
      t.cost.windows_generated = static_cast<std::int64_t>(t.set_a.size());
      return t;
    }
  }
  throw ConfigError("unhandled strategy");
}

std::vector<CurvePoint> sweep(std::span<const EvalImage> images, const ScNetModel& model, const PipelineConfig& cfg,
                              std::span<const double> thresholds, Strategy strategy, double iou_min,
                              Matching matching) {
  if (thresholds.empty()) throw ConfigError("sweep needs at least one threshold");
  std::vector<double> ts(thresholds.begin(), thresholds.end());
  std::sort(ts.begin(), ts.end(), std::greater<>());

  std::vector<CurvePoint> points(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    points[i].strategy = std::string(strategy_name(strategy));
    points[i].threshold = ts[i];
  }
  for (const EvalImage& image : images) {
    const PipelineTrace trace = run_strategy(image, model, cfg, strategy);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto kept = finalize(trace, ts[i], cfg.dedupe_iou);
      std::vector<Box> boxes;
      boxes.reserve(kept.size());
      for (const auto& k : kept) boxes.push_back(k.box);
      points[i].recall += recall(boxes, image.gts, iou_min, matching);
      points[i].cost += trace.cost;
      points[i].proposals_emitted += static_cast<std::int64_t>(kept.size());
    }
  }
  if (!images.empty()) {
    for (auto& p : points) p.recall /= static_cast<double>(images.size());
  }
  return points;
}

std::string curve_csv(std::span<const CurvePoint> points) {
  std::string text = "strategy,threshold,recall,windows_generated,rois_pooled,scnet_evaluations,proposals_emitted\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%lld,%lld,%lld,%lld\n", p.threshold, p.recall,
                  static_cast<long long>(p.cost.windows_generated), static_cast<long long>(p.cost.rois_pooled),
                  static_cast<long long>(p.cost.scnet_evaluations), static_cast<long long>(p.proposals_emitted));
    text += p.strategy;
    text += buf;
  }
  return text;
}

void save_curve(std::span<const CurvePoint> points, const std::filesystem::path& path) {
  io::write_text_atomic(path, curve_csv(points));
}

std::vector<CurvePoint> parse_curve_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) ||
      line != "strategy,threshold,recall,windows_generated,rois_pooled,scnet_evaluations,proposals_emitted") {
    throw FormatError("curve csv: unexpected header");
  }
  std::vector<CurvePoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[7];
    for (int i = 0; i < 7; ++i) {
      if (!std::getline(row, f[i], ',')) throw FormatError("curve csv: short row '" + line + "'");
    }
    try {
      CurvePoint p;
      p.strategy = f[0];
      p.threshold = std::stod(f[1]);
      p.recall = std::stod(f[2]);
      p.cost.windows_generated = std::stoll(f[3]);
      p.cost.rois_pooled = std::stoll(f[4]);
      p.cost.scnet_evaluations = std::stoll(f[5]);
      p.proposals_emitted = std::stoll(f[6]);
      points.push_back(p);
    } catch (const std::exception&) {
      throw FormatError("curve csv: bad row '" + line + "'");
    }
  }
  return points;
}

std::vector<CurvePoint> load_curve(const std::filesystem::path& path) { return parse_curve_csv(io::read_text(path)); }

}  // namespace zoomprop
