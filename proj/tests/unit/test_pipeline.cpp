#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "zoomprop/io.hpp"
#include "zoomprop/pipeline.hpp"
#include "zoomprop/synth.hpp"

using namespace zoomprop;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  Frame frame{0, 0, 640, 480};
  FeatureImage feat;
  ScNetModel model;
  PipelineConfig cfg;

  explicit Fixture(std::uint64_t seed)
      : feat(make_features(seed)), model(ScNetModel::initialize(6 * 2 * 2, 8, 13, seed)) {
    cfg.grid = 2;
    cfg.zoom_threshold = 0.3;
  }

  static FeatureImage make_features(std::uint64_t seed) {
    SynthConfig sc;
    sc.min_width = sc.max_width = 640;
    sc.min_height = sc.max_height = 480;
    return render_features(gen_scene(sc, seed), 6, 16, 0.1, seed + 1);
  }
};

bool inside(const Box& b, const Box& outer) { return outer.contains(b); }

}  // namespace

TEST(Pipeline, ZoomGateClosedGivesEmptyB) {
  Fixture f(1);
  f.model.zoom.bias[0] = -60;
  const auto r = propose(f.feat, f.frame, f.model, f.cfg);
  EXPECT_TRUE(r.trace.set_b.empty());
  EXPECT_TRUE(r.trace.zoom_regions.empty());
  EXPECT_EQ(r.trace.cost.zoom_regions_selected, 0);
  const auto coarse = coarse_windows(f.frame);
  const auto cover = cover_regions(f.frame);
  EXPECT_EQ(r.trace.cost.windows_generated, static_cast<std::int64_t>(coarse.size() + cover.size()));
  EXPECT_EQ(r.trace.cost.scnet_evaluations, static_cast<std::int64_t>(coarse.size() + cover.size()));
}

TEST(Pipeline, ConfidenceOneGivesEmptyC) {
  Fixture f(2);
  f.model.conf.bias.assign(13, 60.0);
  f.cfg.conf_threshold = 1.0;
  EXPECT_TRUE(propose(f.feat, f.frame, f.model, f.cfg).proposals.empty());
}

TEST(Pipeline, CounterIdentitiesAndContainment) {
  for (std::uint64_t seed = 3; seed < 8; ++seed) {
    Fixture f(seed);
    f.model.zoom.bias[0] = seed % 2 ? 0.5 : 2.0;
    f.cfg.max_zoom_regions = static_cast<int>(seed % 4) + 1;
    const auto r = propose(f.feat, f.frame, f.model, f.cfg);
    const auto& t = r.trace;
    const auto cover = cover_regions(f.frame);
    ASSERT_EQ(t.cover_zoom.size(), cover.size());
    EXPECT_LE(t.zoom_regions.size(), static_cast<std::size_t>(f.cfg.max_zoom_regions));
    EXPECT_EQ(t.cost.zoom_regions_selected, static_cast<std::int64_t>(t.zoom_regions.size()));

    std::set<Box> ab;
    std::int64_t fine = 0;
    for (const auto& a : t.set_a) ab.insert(a.box);
    for (const auto& region : t.zoom_regions) {
      EXPECT_GE(region.score, f.cfg.zoom_threshold);
      const auto windows = coarse_windows(Frame::of(region.box));
      fine += static_cast<std::int64_t>(windows.size());
      for (const auto& w : windows) ab.insert(w);
    }
    for (std::size_t i = 1; i < t.zoom_regions.size(); ++i) {
      EXPECT_GE(t.zoom_regions[i - 1].score, t.zoom_regions[i].score);
    }
    // Every unselected region scoring at least a selected one is a tie or over the cap.
    std::size_t above = 0;
    for (double u : t.cover_zoom) above += u >= f.cfg.zoom_threshold;
    EXPECT_EQ(t.zoom_regions.size(), std::min<std::size_t>(above, f.cfg.max_zoom_regions));

    EXPECT_EQ(t.cost.windows_generated, static_cast<std::int64_t>(t.set_a.size() + cover.size()) + fine);
    EXPECT_EQ(t.cost.scnet_evaluations, static_cast<std::int64_t>(cover.size() + ab.size()));
    EXPECT_EQ(t.cost.rois_pooled, t.cost.scnet_evaluations);

    for (const auto& b : t.set_b) {
      EXPECT_TRUE(std::any_of(t.zoom_regions.begin(), t.zoom_regions.end(),
                              [&](const ScoredBox& z) { return inside(b.box, z.box) && z.score == b.score; }));
    }
    for (const auto& p : r.proposals) {
      EXPECT_TRUE(inside(p.box, f.frame.as_box()));
      EXPECT_GE(p.score, f.cfg.conf_threshold);
      EXPECT_EQ(p.provenance, Provenance::kCPredicted);
    }
  }
}

TEST(Pipeline, MonotoneInThresholds) {
  Fixture f(9);
  f.model.zoom.bias[0] = 1.0;
  std::size_t prev = 0;
  for (double t : {0.9, 0.7, 0.5, 0.3, 0.1}) {
    f.cfg.conf_threshold = t;
    f.cfg.dedupe_iou = 1.0;
    const auto n = propose(f.feat, f.frame, f.model, f.cfg).proposals.size();
    EXPECT_GE(n, prev);
    prev = n;
  }
  std::int64_t prev_regions = -1;
  f.cfg.max_zoom_regions = 1000;
  for (double z : {0.99, 0.8, 0.6, 0.4, 0.2}) {
    f.cfg.zoom_threshold = z;
    const auto r = propose(f.feat, f.frame, f.model, f.cfg);
    EXPECT_GE(r.trace.cost.zoom_regions_selected, prev_regions);
    prev_regions = r.trace.cost.zoom_regions_selected;
  }
}

TEST(Pipeline, ZoomDisabledDenseMatchesBaseline) {
  Fixture f(10);
  f.cfg.zoom_enabled = false;
  f.cfg.proposer = Proposer::kDenseSliding;
  const auto a = propose(f.feat, f.frame, f.model, f.cfg);
  const auto b = dense_baseline(f.feat, f.frame, f.model, f.cfg);
  EXPECT_EQ(a.proposals, b.proposals);
  EXPECT_EQ(a.trace.candidates, b.trace.candidates);
  EXPECT_EQ(a.trace.cost, b.trace.cost);
}

TEST(Pipeline, DeterministicAndChecksModel) {
  Fixture f(11);
  const auto a = propose(f.feat, f.frame, f.model, f.cfg);
  const auto b = propose(f.feat, f.frame, f.model, f.cfg);
  EXPECT_EQ(a.proposals, b.proposals);
  EXPECT_EQ(a.trace.cost, b.trace.cost);
  const ScNetModel wrong = ScNetModel::initialize(6 * 3 * 3, 8, 13, 1);
  EXPECT_THROW(propose(f.feat, f.frame, wrong, f.cfg), ModelMismatch);
  EXPECT_THROW(dense_baseline(f.feat, f.frame, wrong, f.cfg), ModelMismatch);
  f.cfg.zoom_threshold = 0;
  EXPECT_THROW(propose(f.feat, f.frame, f.model, f.cfg), ConfigError);
}

TEST(Pipeline, ExternalProposer) {
  Fixture f(12);
  f.cfg.proposer = Proposer::kExternalFile;
  f.cfg.external_proposals = {Box(10, 10, 100, 100), Box(600, 400, 700, 500), Box(700, 10, 800, 50)};
  f.model.zoom.bias[0] = -60;
  const auto r = propose(f.feat, f.frame, f.model, f.cfg);
  ASSERT_EQ(r.trace.set_a.size(), 2u);
  EXPECT_EQ(r.trace.set_a[1].box, Box(600, 400, 640, 480));
}

TEST(Dedupe, GreedyByScore) {
  std::vector<ScoredBox> in{{Box(0, 0, 10, 10), 0.5, Provenance::kCPredicted},
                            {Box(0, 0, 10, 10.2), 0.9, Provenance::kCPredicted},
                            {Box(50, 50, 60, 60), 0.7, Provenance::kCPredicted},
                            {Box(0, 0, 10, 12), 0.6, Provenance::kCPredicted}};
  const auto out = dedupe(in, 0.95);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].score, 0.9);
  EXPECT_EQ(out[1].score, 0.7);
  EXPECT_EQ(out[2].score, 0.6);
  EXPECT_EQ(dedupe(in, 1.0).size(), 4u);
}

TEST(Dedupe, MatchesQuadraticReference) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 200), side(2, 60), score(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ScoredBox> in;
    for (int i = 0; i < 300; ++i) {
      const double x = pos(rng), y = pos(rng), w = side(rng);
      const double jitter = trial % 2 ? 0.5 : 5;
      in.push_back({Box(x, y, x + w, y + w + jitter * score(rng)), score(rng), Provenance::kCPredicted});
      if (i % 3 == 0) in.push_back({Box(x + 0.3, y, x + w, y + w), score(rng), Provenance::kCPredicted});
    }
    for (double t : {0.5, 0.8, 0.95}) {
      auto sorted = in;
      std::stable_sort(sorted.begin(), sorted.end(), [](const ScoredBox& a, const ScoredBox& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.box < b.box;
      });
      std::vector<ScoredBox> want;
      for (const auto& c : sorted) {
        if (std::none_of(want.begin(), want.end(), [&](const ScoredBox& k) { return iou(k.box, c.box) > t; })) {
          want.push_back(c);
        }
      }
      EXPECT_EQ(dedupe(in, t), want);
    }
  }
}

TEST(ProposalCsv, RoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "zoomprop_pipeline_csv";
  fs::create_directories(dir);
  std::vector<ProposalRow> rows{{"a", {Box(1.5, 2, 30.25, 40), 0.125, Provenance::kCPredicted}},
                                {"b", {Box(0, 0, 5, 5), 1.0, Provenance::kACoarse}},
                                {"a", {Box(3, 3, 9, 9), 0.75, Provenance::kBZoom}}};
  save_proposals(rows, dir / "p.csv");
  const auto back = load_proposals(dir / "p.csv");
  ASSERT_EQ(back.at("a").size(), 2u);
  EXPECT_EQ(back.at("a")[0], rows[0].box);
  EXPECT_EQ(back.at("a")[1], rows[2].box);
  EXPECT_EQ(back.at("b")[0], rows[1].box);

  io::write_text_atomic(dir / "bare.csv", "image_id,x1,y1,x2,y2\nq,1,2,3,4\n");
  const auto bare = load_proposals(dir / "bare.csv");
  EXPECT_EQ(bare.at("q")[0].score, 1.0);
  io::write_text_atomic(dir / "bad.csv", "image_id,x1,y1,x2,y2\nq,1,2,0,4\n");
  EXPECT_THROW(load_proposals(dir / "bad.csv"), FormatError);
  io::write_text_atomic(dir / "bad2.csv", "id,x\n");
  EXPECT_THROW(load_proposals(dir / "bad2.csv"), FormatError);
  fs::remove_all(dir);
}
