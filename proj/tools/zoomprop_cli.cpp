// zoomprop command-line tool: gen, train, propose, eval, sweep.

#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zoomprop/config.hpp"
#include "zoomprop/eval.hpp"
#include "zoomprop/io.hpp"
#include "zoomprop/pipeline.hpp"
#include "zoomprop/scnet.hpp"
#include "zoomprop/synth.hpp"

namespace zp = zoomprop;

namespace {

struct Invocation {
  std::string config_file;
  std::map<std::string, std::optional<std::string>> flags;
};

void add_run_options(CLI::App* cmd, Invocation& inv) {
  cmd->add_option("--config", inv.config_file, "flat key = value config file");
  for (const auto& [key, info] : zp::RunConfig::keys()) {
    inv.flags[key];
    cmd->add_option("--" + key, inv.flags[key], info.help + " (default: " + info.default_value + ")");
  }
}

zp::RunConfig resolve(const Invocation& inv) {
  zp::RunConfig cfg;
  if (!inv.config_file.empty()) cfg.load_file(inv.config_file);
  for (const auto& [key, value] : inv.flags) {
    if (value) cfg.set(key, *value);
  }
  return cfg;
}

struct SelectedScene {
  int index;  // position in the manifest
  zp::Scene scene;
};

std::vector<SelectedScene> select_scenes(const zp::RunConfig& cfg) {
  const auto scenes = zp::read_dataset_scenes(cfg.get("data-dir"));
  const auto offset = cfg.get_int("image-offset");
  const auto limit = cfg.get_int("image-limit");
  if (offset < 0) throw zp::ConfigError("image-offset must be non-negative");
  std::vector<SelectedScene> out;
  for (auto i = static_cast<std::size_t>(offset); i < scenes.size(); ++i) {
    if (limit >= 0 && static_cast<std::int64_t>(out.size()) >= limit) break;
    out.push_back({static_cast<int>(i), scenes[i]});
  }
  return out;
}

zp::FeatureImage load_scene_features(const zp::RunConfig& cfg, const zp::Scene& s) {
  return zp::load_features(zp::DatasetPaths{cfg.get("data-dir")}.features(s.image_id));
}

std::vector<zp::EvalImage> load_eval_images(const zp::RunConfig& cfg) {
  std::map<std::string, std::vector<zp::ScoredBox>> external;
  if (!cfg.get("external-proposals").empty()) external = zp::load_proposals(cfg.get("external-proposals"));
  std::vector<zp::EvalImage> images;
  for (auto& sel : select_scenes(cfg)) {
    zp::EvalImage img{sel.scene.image_id, load_scene_features(cfg, sel.scene),
                      zp::Frame(0, 0, sel.scene.width, sel.scene.height), sel.scene.boxes(), {}};
    if (auto it = external.find(img.image_id); it != external.end()) {
      for (const auto& sb : it->second) img.external_proposals.push_back(sb.box);
    }
    images.push_back(std::move(img));
  }
  return images;
}

int cmd_gen(const zp::RunConfig& cfg) {
  const auto count = static_cast<int>(cfg.get_int("count"));
  zp::write_dataset(cfg.get("data-dir"), count, cfg.get_u64("seed"), cfg.synth());
  std::cout << "generated " << count << " scenes in " << cfg.get("data-dir") << "\n";
  return 0;
}

int cmd_train(const zp::RunConfig& cfg) {
  const auto selected = select_scenes(cfg);
  const auto grid = static_cast<int>(cfg.get_int("pool-grid"));
  const auto sampling = cfg.roi_sampling();
  const auto seed = cfg.get_u64("seed");
  std::vector<zp::TrainingImage> data;
  int channels = static_cast<int>(cfg.get_int("channels"));
  for (const auto& sel : selected) {
    const auto feat = load_scene_features(cfg, sel.scene);
    channels = feat.channels();
    const auto gts = sel.scene.boxes();
    data.push_back(zp::build_training_image(feat, sel.scene.width, sel.scene.height, gts, grid,
                                            zp::mix_seed(seed, static_cast<std::uint64_t>(sel.index)), sampling));
  }
  const auto scfg = cfg.scnet(channels);
  std::cerr << "training on " << data.size() << " images, " << scfg.iterations << " iterations\n";
  const auto result = zp::train(data, scfg);
  zp::save_model(result.model, cfg.get("model"));
  zp::save_loss_history(result.loss_history, cfg.get("loss-csv"));
  if (!result.loss_history.empty()) {
    const auto& h = result.loss_history;
    const std::size_t w = std::min<std::size_t>(100, h.size());
    const double head = std::accumulate(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(w), 0.0) / w;
    const double tail = std::accumulate(h.end() - static_cast<std::ptrdiff_t>(w), h.end(), 0.0) / w;
    std::cout << "loss moving average: first " << head << ", last " << tail << "\n";
  }
  std::cout << "model written to " << cfg.get("model") << "\n";
  return 0;
}

int cmd_propose(const zp::RunConfig& cfg) {
  const auto model = zp::load_model(cfg.get("model"));
  const auto pcfg = cfg.pipeline();
  const auto strategy = zp::parse_strategy(cfg.get("strategy"));
  const bool candidates = cfg.get_bool("include-candidates");
  std::vector<zp::ProposalRow> rows;
  std::vector<zp::CounterRow> counters;
  for (const auto& img : load_eval_images(cfg)) {
    const auto trace = zp::run_strategy(img, model, pcfg, strategy);
    for (const auto& sb : zp::finalize(trace, pcfg.conf_threshold, pcfg.dedupe_iou)) rows.push_back({img.image_id, sb});
    if (candidates) {
      for (const auto& sb : trace.set_a) rows.push_back({img.image_id, sb});
      for (const auto& sb : trace.set_b) rows.push_back({img.image_id, sb});
    }
    counters.push_back({img.image_id, trace.cost});
  }
  zp::save_proposals(rows, cfg.get("proposals"));
  zp::save_counters(counters, cfg.get("counters"));
  zp::CostCounters total;
  for (const auto& c : counters) total += c.cost;
  std::cout << "strategy " << zp::strategy_name(strategy) << ": " << rows.size() << " proposals over "
            << counters.size() << " images; windows_generated=" << total.windows_generated
            << " rois_pooled=" << total.rois_pooled << " scnet_evaluations=" << total.scnet_evaluations
            << " zoom_regions_selected=" << total.zoom_regions_selected << "\n";
  return 0;
}

int run_sweep(const zp::RunConfig& cfg) {
  const auto model = zp::load_model(cfg.get("model"));
  const auto pcfg = cfg.pipeline();
  const auto thresholds = cfg.get_doubles("thresholds");
  const auto images = load_eval_images(cfg);
  std::vector<zp::CurvePoint> points;
  for (const auto& name : cfg.get_list("strategies")) {
    const auto curve = zp::sweep(images, model, pcfg, thresholds, zp::parse_strategy(name), cfg.get_double("iou-min"),
                                 cfg.matching());
    points.insert(points.end(), curve.begin(), curve.end());
  }
  zp::save_curve(points, cfg.get("curve"));
  std::cout << zp::curve_csv(points);
  return 0;
}

int cmd_eval(const zp::RunConfig& cfg) {
  if (cfg.get("eval-proposals").empty()) return run_sweep(cfg);

  const auto proposals = zp::load_proposals(cfg.get("eval-proposals"));
  const double iou_min = cfg.get_double("iou-min");
  const auto matching = cfg.matching();
  std::string per_image = "image_id,num_gt,num_proposals,recall\n";
  double sum = 0;
  std::int64_t emitted = 0;
  const auto selected = select_scenes(cfg);
  for (const auto& sel : selected) {
    std::vector<zp::Box> boxes;
    if (auto it = proposals.find(sel.scene.image_id); it != proposals.end()) {
      for (const auto& sb : it->second) boxes.push_back(sb.box);
    }
    const auto gts = sel.scene.boxes();
    const double r = zp::recall(boxes, gts, iou_min, matching);
    sum += r;
    emitted += static_cast<std::int64_t>(boxes.size());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r);
    per_image += sel.scene.image_id + "," + std::to_string(gts.size()) + "," + std::to_string(boxes.size()) + "," +
                 buf + "\n";
  }
  zp::CurvePoint point;
  point.strategy = "proposals_file";
  point.recall = selected.empty() ? 0.0 : sum / static_cast<double>(selected.size());
  point.proposals_emitted = emitted;
  const std::vector<zp::CurvePoint> points{point};
  zp::save_curve(points, cfg.get("curve"));
  zp::io::write_text_atomic(cfg.get("recall-csv"), per_image);
  std::cout << per_image << "mean recall " << point.recall << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zoomprop: zoom-in object proposals with a spatial correlation network"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "generate a synthetic dataset"},
      {"train", "train the SC-Net head"},
      {"propose", "run the proposal pipeline"},
      {"eval", "score a proposal file, or sweep when none is given"},
      {"sweep", "sweep confidence thresholds for each strategy"},
  };
  std::map<std::string, Invocation> invocations;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_run_options(subs[name], invocations[name]);
  }
  CLI11_PARSE(app, argc, argv);

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    try {
      const auto cfg = resolve(invocations[name]);
      std::cout << "# zoomprop " << name << " effective config\n" << cfg.dump() << "# end config\n";
      if (name == "gen") return cmd_gen(cfg);
      if (name == "train") return cmd_train(cfg);
      if (name == "propose") return cmd_propose(cfg);
      if (name == "eval") return cmd_eval(cfg);
      if (name == "sweep") return run_sweep(cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
