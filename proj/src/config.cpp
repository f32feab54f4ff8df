#include "zoomprop/config.hpp"

#include <sstream>

#include "io_util.hpp"

namespace zoomprop {

const std::map<std::string, RunConfig::KeyInfo>& RunConfig::keys() {
  static const std::map<std::string, KeyInfo> k = {
      // paths and selection
      {"data-dir", {"data", "dataset directory"}},
      {"model", {"model.scnt", "model file"}},
      {"loss-csv", {"loss.csv", "training loss history"}},
      {"proposals", {"proposals.csv", "proposal CSV written by propose"}},
      {"counters", {"counters.csv", "per-image cost counters written by propose"}},
      {"curve", {"curve.csv", "curve CSV written by eval/sweep"}},
      {"recall-csv", {"recall.csv", "per-image recall written by eval in proposals mode"}},
      {"eval-proposals", {"", "proposal CSV to score; empty runs the sweep instead"}},
      {"external-proposals", {"", "CSV of external proposals (image_id,x1,y1,x2,y2)"}},
      {"include-candidates", {"false", "also write sets A and B to the proposal CSV"}},
      {"image-offset", {"0", "first manifest entry used"}},
      {"image-limit", {"-1", "number of manifest entries used (-1: all)"}},
      {"seed", {"1", "base random seed"}},
      // synth
      {"count", {"10", "number of scenes to generate"}},
      {"min-width", {"2400", "scene width lower bound"}},
      {"max-width", {"2400", "scene width upper bound"}},
      {"min-height", {"1800", "scene height lower bound"}},
      {"max-height", {"1800", "scene height upper bound"}},
      {"min-clusters", {"2", "small-object clusters per scene, lower bound"}},
      {"max-clusters", {"3", "small-object clusters per scene, upper bound"}},
      {"min-objects", {"2", "objects per cluster, lower bound"}},
      {"max-objects", {"4", "objects per cluster, upper bound"}},
      {"context-radius", {"0.05", "cluster spread as a fraction of the shorter side"}},
      {"small-side-min", {"0.015625", "small object side, fraction of shorter side"}},
      {"small-side-max", {"0.0625", "small object side, fraction of shorter side"}},
      {"min-large", {"1", "large objects per scene, lower bound"}},
      {"max-large", {"2", "large objects per scene, upper bound"}},
      {"large-side-min", {"0.125", "large object side, fraction of shorter side"}},
      {"large-side-max", {"0.333333333333", "large object side, fraction of shorter side"}},
      {"channels", {"16", "feature channels"}},
      {"stride", {"16", "pixels per feature cell"}},
      {"noise", {"0.1", "feature noise sigma"}},
      // scnet
      {"hidden-dim", {"64", "hidden layer width"}},
      {"pool-grid", {"4", "RoI pooling grid G"}},
      {"iterations", {"2000", "SGD iterations"}},
      {"learning-rate", {"0.01", "SGD learning rate"}},
      {"momentum", {"0.9", "SGD momentum"}},
      {"weight-decay", {"0.0005", "L2 weight decay"}},
      {"batch-size", {"128", "RoIs per mini-batch"}},
      {"images-per-batch", {"2", "images per mini-batch"}},
      {"delta-loss-weight", {"1", "weight of the smooth-L1 term"}},
      {"min-positive-fraction", {"0.25", "share of patterned RoIs per image in a batch"}},
      {"jitter-per-gt", {"4", "jittered copies of each gt used as training RoIs"}},
      {"jitter-fraction", {"0.25", "jitter amplitude as a fraction of the side"}},
      {"fine-negatives", {"64", "unpatterned fine windows sampled per image"}},
      // pipeline
      {"strategy", {"zoom", "zoom | dense | windows | external"}},
      {"zoom-enabled", {"true", "run the zoom branch"}},
      {"zoom-threshold", {"0.5", "zoom indicator threshold"}},
      {"conf-threshold", {"0.001", "bounding-box confidence threshold"}},
      {"max-zoom-regions", {"8", "cap on selected zoom regions"}},
      {"dedupe-iou", {"0.95", "IoU above which lower-scored duplicates are dropped"}},
      // eval
      {"thresholds", {"0.5,0.1,0.01,0.001,0.0001", "confidence thresholds for sweeps"}},
      {"strategies", {"zoom,dense,windows", "strategies compared by sweep"}},
      {"iou-min", {"0.5", "recall IoU threshold"}},
      {"matching", {"existence", "existence | greedy"}},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const auto& [key, info] : keys()) values_[key] = info.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

void RunConfig::load_file(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    try {
      set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const auto r = std::stoll(v, &pos);
    if (pos == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const auto r = std::stoull(v, &pos);
    if (pos == v.size() && !v.empty() && v[0] != '-') return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad number '" + item + "'");
    }
  }
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  c.min_width = static_cast<int>(get_int("min-width"));
  c.max_width = static_cast<int>(get_int("max-width"));
  c.min_height = static_cast<int>(get_int("min-height"));
  c.max_height = static_cast<int>(get_int("max-height"));
  c.min_clusters = static_cast<int>(get_int("min-clusters"));
  c.max_clusters = static_cast<int>(get_int("max-clusters"));
  c.min_objects_per_cluster = static_cast<int>(get_int("min-objects"));
  c.max_objects_per_cluster = static_cast<int>(get_int("max-objects"));
  c.context_radius = get_double("context-radius");
  c.small_side_min = get_double("small-side-min");
  c.small_side_max = get_double("small-side-max");
  c.min_large = static_cast<int>(get_int("min-large"));
  c.max_large = static_cast<int>(get_int("max-large"));
  c.large_side_min = get_double("large-side-min");
  c.large_side_max = get_double("large-side-max");
  c.channels = static_cast<int>(get_int("channels"));
  c.stride = static_cast<float>(get_double("stride"));
  c.noise = get_double("noise");
  c.validate();
  return c;
}

ScNetConfig RunConfig::scnet(int channels) const {
  ScNetConfig c;
  const int grid = static_cast<int>(get_int("pool-grid"));
  c.input_dim = channels * grid * grid;
  c.hidden_dim = static_cast<int>(get_int("hidden-dim"));
  c.iterations = static_cast<int>(get_int("iterations"));
  c.learning_rate = get_double("learning-rate");
  c.momentum = get_double("momentum");
  c.weight_decay = get_double("weight-decay");
  c.batch_size = static_cast<int>(get_int("batch-size"));
  c.images_per_batch = static_cast<int>(get_int("images-per-batch"));
  c.delta_loss_weight = get_double("delta-loss-weight");
  c.min_positive_fraction = get_double("min-positive-fraction");
  c.seed = get_u64("seed");
  c.validate();
  return c;
}

RoiSamplingConfig RunConfig::roi_sampling() const {
  RoiSamplingConfig c;
  c.jitter_per_gt = static_cast<int>(get_int("jitter-per-gt"));
  c.jitter_fraction = get_double("jitter-fraction");
  c.fine_negatives = static_cast<int>(get_int("fine-negatives"));
  if (c.jitter_per_gt < 0 || c.fine_negatives < 0 || !(c.jitter_fraction >= 0)) {
    throw ConfigError("RoI sampling settings must be non-negative");
  }
  return c;
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig c;
  c.zoom_threshold = get_double("zoom-threshold");
  c.conf_threshold = get_double("conf-threshold");
  c.max_zoom_regions = static_cast<int>(get_int("max-zoom-regions"));
  c.grid = static_cast<int>(get_int("pool-grid"));
  c.dedupe_iou = get_double("dedupe-iou");
  c.zoom_enabled = get_bool("zoom-enabled");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("pipeline settings: ") + e.what());
  }
  return c;
}

Matching RunConfig::matching() const {
  const std::string& m = get("matching");
  if (m == "existence") return Matching::kExistence;
  if (m == "greedy") return Matching::kGreedyOneToOne;
  throw ConfigError("config key 'matching': expected existence or greedy, got '" + m + "'");
}

}  // namespace zoomprop
