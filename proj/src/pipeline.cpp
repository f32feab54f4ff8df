#include "zoomprop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "io_util.hpp"

namespace zoomprop {

std::string_view proposer_name(Proposer p) {
  switch (p) {
    case Proposer::kCoarseSliding:
      return "coarse_sliding";
    case Proposer::kDenseSliding:
      return "dense_sliding";
    case Proposer::kExternalFile:
      return "external_file";
  }
  return "?";
}

Proposer parse_proposer(std::string_view name) {
  if (name == "coarse_sliding") return Proposer::kCoarseSliding;
  if (name == "dense_sliding") return Proposer::kDenseSliding;
  if (name == "external_file") return Proposer::kExternalFile;
  throw ConfigError("unknown proposer '" + std::string(name) + "'");
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kACoarse:
      return "A-coarse";
    case Provenance::kBZoom:
      return "B-zoom";
    case Provenance::kCPredicted:
      return "C-predicted";
  }
  return "?";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "A-coarse") return Provenance::kACoarse;
  if (name == "B-zoom") return Provenance::kBZoom;
  if (name == "C-predicted") return Provenance::kCPredicted;
  throw FormatError("unknown provenance '" + std::string(name) + "'");
}

void PipelineConfig::validate() const {
  if (!(zoom_threshold > 0 && zoom_threshold < 1)) throw ConfigError("zoom_threshold must lie in (0,1)");
  // 1.0 is accepted: it closes the gate since reported confidences stay below it.
  if (!(conf_threshold > 0 && conf_threshold <= 1)) throw ConfigError("conf_threshold must lie in (0,1]");
  if (max_zoom_regions < 0) throw ConfigError("max_zoom_regions must be non-negative");
  if (grid < 1) throw ConfigError("pooling grid must be at least 1");
  if (!(dedupe_iou > 0 && dedupe_iou <= 1)) throw ConfigError("dedupe_iou must lie in (0,1]");
}

CostCounters& CostCounters::operator+=(const CostCounters& o) {
  windows_generated += o.windows_generated;
  rois_pooled += o.rois_pooled;
  scnet_evaluations += o.scnet_evaluations;
  zoom_regions_selected += o.zoom_regions_selected;
  return *this;
}

namespace {

void check_model(const FeatureImage& feat, const ScNetModel& model, const PipelineConfig& cfg) {
  cfg.validate();
  const int expected = feat.channels() * cfg.grid * cfg.grid;
  if (model.input_dim() != expected) {
    std::ostringstream os;
    os << "model input_dim " << model.input_dim() << " does not match pooling C*G*G = " << feat.channels() << "*"
       << cfg.grid << "*" << cfg.grid << " = " << expected;
    throw ModelMismatch(os.str());
  }
}

// Pools and evaluates RoIs with reusable buffers.
class Evaluator {
 public:
  Evaluator(const FeatureImage& feat, const ScNetModel& model, int grid, CostCounters& cost)
      : feat_(feat), model_(model), grid_(grid), cost_(cost),
        pooled_(static_cast<std::size_t>(feat.channels()) * grid * grid) {}

  const ScNetOutput& operator()(const Box& roi) {
    roi_pool_into(feat_, roi, grid_, pooled_);
    ++cost_.rois_pooled;
    forward(model_, pooled_, cache_, out_);
    ++cost_.scnet_evaluations;
    return out_;
  }

 private:
  const FeatureImage& feat_;
  const ScNetModel& model_;
  int grid_;
  CostCounters& cost_;
  std::vector<float> pooled_;
  ForwardCache cache_;
  ScNetOutput out_;
};

std::optional<Box> clip_to_frame(const Box& b, const Frame& f) {
  const double x1 = std::clamp(b.x1(), f.x, f.x + f.width), x2 = std::clamp(b.x2(), f.x, f.x + f.width);
  const double y1 = std::clamp(b.y1(), f.y, f.y + f.height), y2 = std::clamp(b.y2(), f.y, f.y + f.height);
  if (!(x1 < x2 && y1 < y2)) return std::nullopt;
  return Box(x1, y1, x2, y2);
}

void emit_predictions(const Box& roi, const ScNetOutput& out, const Frame& image, std::vector<ScoredBox>& dst) {
  for (std::size_t k = 0; k < out.conf.size(); ++k) {
    const CornerDeltas& d = out.deltas[k];
    // Same arithmetic as apply_deltas; degenerate decodes are dropped.
    const double w = roi.width(), h = roi.height();
    const double x1 = roi.x1() + d.dx1 * w, y1 = roi.y1() + d.dy1 * h;
    const double x2 = roi.x2() + d.dx2 * w, y2 = roi.y2() + d.dy2 * h;
    if (!(x1 < x2 && y1 < y2) || !std::isfinite(x1 + y1 + x2 + y2)) continue;
    if (const auto clipped = clip_to_frame(Box(x1, y1, x2, y2), image)) {
      dst.push_back({*clipped, out.conf[k], Provenance::kCPredicted});
    }
  }
}

std::vector<Box> sliding_proposer(Proposer p, const Frame& frame) {
  return p == Proposer::kDenseSliding ? dense_windows(frame) : coarse_windows(frame);
}

bool score_order(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.box < b.box;
}

}  // namespace

PipelineTrace evaluate_pipeline(const FeatureImage& feat, const Frame& image, const ScNetModel& model,
                                const PipelineConfig& cfg) {
  check_model(feat, model, cfg);
  PipelineTrace trace;
  trace.image_width = image.width;
  trace.image_height = image.height;
  CostCounters& cost = trace.cost;
  Evaluator eval(feat, model, cfg.grid, cost);

  // (1) Set A over the whole frame.
  std::vector<Box> a_boxes;
  if (cfg.proposer == Proposer::kExternalFile) {
    for (const Box& b : cfg.external_proposals) {
      if (const auto clipped = clip_to_frame(b, image)) a_boxes.push_back(*clipped);
    }
  } else {
    a_boxes = sliding_proposer(cfg.proposer, image);
  }
  cost.windows_generated += static_cast<std::int64_t>(a_boxes.size());
  for (const Box& b : a_boxes) trace.set_a.push_back({b, 1.0, Provenance::kACoarse});

  // (2) Zoom indicators over the cover; (3) set B inside selected regions.
  std::vector<Box> b_boxes;
  if (cfg.zoom_enabled) {
    const auto cover = cover_regions(image);
    cost.windows_generated += static_cast<std::int64_t>(cover.size());
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < cover.size(); ++i) {
      const double u = eval(cover[i]).zoom;
      trace.cover_zoom.push_back(u);
      if (u >= cfg.zoom_threshold) ranked.emplace_back(u, i);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    if (ranked.size() > static_cast<std::size_t>(cfg.max_zoom_regions)) ranked.resize(cfg.max_zoom_regions);
    cost.zoom_regions_selected = static_cast<std::int64_t>(ranked.size());

    for (const auto& [u, idx] : ranked) {
      const Box& region = cover[idx];
      trace.zoom_regions.push_back({region, u, Provenance::kBZoom});
      std::vector<Box> fine;
      try {
        // An external proposer cannot be re-run at higher resolution; use
        // the coarse family inside the region instead.
        fine = sliding_proposer(cfg.proposer == Proposer::kDenseSliding ? Proposer::kDenseSliding
                                                                        : Proposer::kCoarseSliding,
                                Frame::of(region));
      } catch (const EmptyResult&) {
        continue;
      }
      cost.windows_generated += static_cast<std::int64_t>(fine.size());
      for (const Box& b : fine) {
        trace.set_b.push_back({b, u, Provenance::kBZoom});
        b_boxes.push_back(b);
      }
    }
  }

  // (4) Bounding-box prediction on A u B.
  std::set<Box> seen;
  auto predict = [&](const Box& roi) {
    if (!seen.insert(roi).second) return;
    emit_predictions(roi, eval(roi), image, trace.candidates);
  };
  for (const Box& b : a_boxes) predict(b);
  for (const Box& b : b_boxes) predict(b);
  return trace;
}

std::vector<ScoredBox> dedupe(std::vector<ScoredBox> boxes, double iou_threshold) {
  std::stable_sort(boxes.begin(), boxes.end(), score_order);
  if (iou_threshold >= 1.0 || boxes.empty()) return boxes;

  // IoU > t forces the widths to within a factor t of each other and the
  // top-left corners to within (1-t)/t of the candidate's extent, so kept
  // boxes are bucketed by corner position and log-width.
  const double t = iou_threshold;
  const double cell = 16.0;
  const double log_step = std::log(1.0 / t);
  struct Key {
    long long x, y, s;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<long long>()(k.x * 73856093LL ^ k.y * 19349663LL ^ k.s * 83492791LL);
    }
  };
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> grid;
  std::vector<ScoredBox> kept;
  for (const ScoredBox& cand : boxes) {
    const Box& b = cand.box;
    const double rx = (1.0 - t) / t * b.width();
    const double ry = (1.0 - t) / t * b.height();
    const auto s = static_cast<long long>(std::floor(std::log(b.width()) / log_step));
    const auto gx0 = static_cast<long long>(std::floor((b.x1() - rx) / cell));
    const auto gx1 = static_cast<long long>(std::floor((b.x1() + rx) / cell));
    const auto gy0 = static_cast<long long>(std::floor((b.y1() - ry) / cell));
    const auto gy1 = static_cast<long long>(std::floor((b.y1() + ry) / cell));
    bool suppressed = false;
    for (long long ss = s - 1; ss <= s + 1 && !suppressed; ++ss) {
      for (long long gy = gy0; gy <= gy1 && !suppressed; ++gy) {
        for (long long gx = gx0; gx <= gx1 && !suppressed; ++gx) {
          const auto it = grid.find(Key{gx, gy, ss});
          if (it == grid.end()) continue;
          for (std::size_t idx : it->second) {
            if (iou(kept[idx].box, b) > t) {
              suppressed = true;
              break;
            }
          }
        }
      }
    }
    if (suppressed) continue;
    grid[Key{static_cast<long long>(std::floor(b.x1() / cell)), static_cast<long long>(std::floor(b.y1() / cell)), s}]
        .push_back(kept.size());
    kept.push_back(cand);
  }
  return kept;
}

std::vector<ScoredBox> finalize(const PipelineTrace& trace, double conf_threshold, double dedupe_iou) {
  std::vector<ScoredBox> passed;
  for (const ScoredBox& c : trace.candidates) {
    if (c.score >= conf_threshold) passed.push_back(c);
  }
  return dedupe(std::move(passed), dedupe_iou);
}

PipelineResult propose(const FeatureImage& feat, const Frame& image, const ScNetModel& model,
                       const PipelineConfig& cfg) {
  PipelineResult r;
  r.trace = evaluate_pipeline(feat, image, model, cfg);
  r.proposals = finalize(r.trace, cfg.conf_threshold, cfg.dedupe_iou);
  return r;
}

PipelineResult dense_baseline(const FeatureImage& feat, const Frame& image, const ScNetModel& model,
                              const PipelineConfig& cfg) {
  check_model(feat, model, cfg);
  PipelineResult r;
  PipelineTrace& trace = r.trace;
  trace.image_width = image.width;
  trace.image_height = image.height;
  Evaluator eval(feat, model, cfg.grid, trace.cost);
  const auto windows = dense_windows(image);
  trace.cost.windows_generated = static_cast<std::int64_t>(windows.size());
  for (const Box& w : windows) {
    trace.set_a.push_back({w, 1.0, Provenance::kACoarse});
    emit_predictions(w, eval(w), image, trace.candidates);
  }
  r.proposals = finalize(trace, cfg.conf_threshold, cfg.dedupe_iou);
  return r;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": not a number: '" + s + "'");
  }
}

}  // namespace

std::string proposals_csv(const std::vector<ProposalRow>& rows) {
  std::string text = "image_id,x1,y1,x2,y2,score,provenance\n";
  char buf[256];
  for (const auto& r : rows) {
    const Box& b = r.box.box;
    std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g,%.10g,%.9g,", b.x1(), b.y1(), b.x2(), b.y2(), r.box.score);
    text += r.image_id;
    text += buf;
    text += provenance_name(r.box.provenance);
    text += '\n';
  }
  return text;
}

void save_proposals(const std::vector<ProposalRow>& rows, const std::filesystem::path& path) {
  io::write_text_atomic(path, proposals_csv(rows));
}

std::map<std::string, std::vector<ScoredBox>> load_proposals(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty proposals file");
  const auto header = split_csv(line);
  const bool full = header == std::vector<std::string>{"image_id", "x1", "y1", "x2", "y2", "score", "provenance"};
  const bool bare = header == std::vector<std::string>{"image_id", "x1", "y1", "x2", "y2"};
  if (!full && !bare) throw FormatError(path.string() + ": unexpected proposals header '" + line + "'");

  std::map<std::string, std::vector<ScoredBox>> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields");
    try {
      Box b(parse_double(f[1], where), parse_double(f[2], where), parse_double(f[3], where), parse_double(f[4], where));
      ScoredBox sb{b, 1.0, Provenance::kCPredicted};
      if (full) {
        sb.score = parse_double(f[5], where);
        sb.provenance = parse_provenance(f[6]);
      }
      out[f[0]].push_back(sb);
    } catch (const InvalidBox& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

void save_counters(const std::vector<CounterRow>& rows, const std::filesystem::path& path) {
  std::string text = "image_id,windows_generated,rois_pooled,scnet_evaluations,zoom_regions_selected\n";
  CostCounters total;
  for (const auto& r : rows) {
    total += r.cost;
    text += r.image_id + "," + std::to_string(r.cost.windows_generated) + "," + std::to_string(r.cost.rois_pooled) +
            "," + std::to_string(r.cost.scnet_evaluations) + "," + std::to_string(r.cost.zoom_regions_selected) + "\n";
  }
  text += "TOTAL," + std::to_string(total.windows_generated) + "," + std::to_string(total.rois_pooled) + "," +
          std::to_string(total.scnet_evaluations) + "," + std::to_string(total.zoom_regions_selected) + "\n";
  io::write_text_atomic(path, text);
}

}  // namespace zoomprop
