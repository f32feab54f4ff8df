#include <gtest/gtest.h>

#include <filesystem>

#include "zoomprop/config.hpp"
#include "zoomprop/io.hpp"

using namespace zoomprop;
namespace fs = std::filesystem;

TEST(RunConfig, DefaultsMatchLibraryDefaults) {
  const RunConfig c;
  const SynthConfig s = c.synth();
  const SynthConfig sd;
  EXPECT_EQ(s.min_width, sd.min_width);
  EXPECT_EQ(s.max_clusters, sd.max_clusters);
  EXPECT_EQ(s.small_side_min, sd.small_side_min);
  EXPECT_EQ(s.small_side_max, sd.small_side_max);
  EXPECT_EQ(s.channels, sd.channels);
  EXPECT_EQ(s.stride, sd.stride);
  EXPECT_NEAR(s.large_side_max, sd.large_side_max, 1e-12);

  const ScNetConfig n = c.scnet(16);
  const ScNetConfig nd;
  EXPECT_EQ(n.input_dim, 256);
  EXPECT_EQ(n.hidden_dim, nd.hidden_dim);
  EXPECT_EQ(n.learning_rate, nd.learning_rate);
  EXPECT_EQ(n.momentum, nd.momentum);
  EXPECT_EQ(n.weight_decay, nd.weight_decay);
  EXPECT_EQ(n.batch_size, nd.batch_size);
  EXPECT_EQ(n.images_per_batch, nd.images_per_batch);
  EXPECT_EQ(n.iterations, nd.iterations);
  EXPECT_EQ(n.delta_loss_weight, nd.delta_loss_weight);

  const PipelineConfig p = c.pipeline();
  const PipelineConfig pd;
  EXPECT_EQ(p.zoom_threshold, pd.zoom_threshold);
  EXPECT_EQ(p.conf_threshold, pd.conf_threshold);
  EXPECT_EQ(p.max_zoom_regions, pd.max_zoom_regions);
  EXPECT_EQ(p.grid, pd.grid);
  EXPECT_EQ(p.dedupe_iou, pd.dedupe_iou);
  EXPECT_TRUE(p.zoom_enabled);
  EXPECT_EQ(c.matching(), Matching::kExistence);
  EXPECT_EQ(c.get_doubles("thresholds").size(), 5u);
}

TEST(RunConfig, UnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(c.set("no-such-key", "1"), ConfigError);
  EXPECT_THROW(c.get("no-such-key"), ConfigError);
  c.set("iterations", "12x");
  EXPECT_THROW(c.get_int("iterations"), ConfigError);
  c.set("seed", "-3");
  EXPECT_THROW(c.get_u64("seed"), ConfigError);
  c.set("zoom-enabled", "maybe");
  EXPECT_THROW(c.get_bool("zoom-enabled"), ConfigError);
  c.set("thresholds", "0.5, x");
  EXPECT_THROW(c.get_doubles("thresholds"), ConfigError);
  c.set("matching", "fuzzy");
  EXPECT_THROW(c.matching(), ConfigError);
  c.set("zoom-threshold", "1.5");
  EXPECT_THROW(c.pipeline(), ConfigError);
}

TEST(RunConfig, TypedGetters) {
  RunConfig c;
  c.set("thresholds", " 0.5 ,0.25,,1e-3 ");
  EXPECT_EQ(c.get_doubles("thresholds"), (std::vector<double>{0.5, 0.25, 1e-3}));
  c.set("strategies", "zoom, dense");
  EXPECT_EQ(c.get_list("strategies"), (std::vector<std::string>{"zoom", "dense"}));
  c.set("zoom-enabled", "no");
  EXPECT_FALSE(c.get_bool("zoom-enabled"));
  c.set("seed", "18446744073709551615");
  EXPECT_EQ(c.get_u64("seed"), 18446744073709551615ULL);
  c.set("matching", "greedy");
  EXPECT_EQ(c.matching(), Matching::kGreedyOneToOne);
}

TEST(RunConfig, FileParsingAndDump) {
  const fs::path dir = fs::temp_directory_path() / "zoomprop_config_test";
  fs::create_directories(dir);
  io::write_text_atomic(dir / "a.cfg", "# comment\n\n  iterations = 7   # trailing\nnoise=0.5\n");
  RunConfig c;
  c.load_file(dir / "a.cfg");
  EXPECT_EQ(c.get_int("iterations"), 7);
  EXPECT_EQ(c.get_double("noise"), 0.5);

  io::write_text_atomic(dir / "dump.cfg", c.dump());
  RunConfig d;
  d.load_file(dir / "dump.cfg");
  EXPECT_EQ(d.dump(), c.dump());

  io::write_text_atomic(dir / "bad.cfg", "iterations = 3\nbogus = 1\n");
  try {
    RunConfig e;
    e.load_file(dir / "bad.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg:2"), std::string::npos) << e.what();
  }
  io::write_text_atomic(dir / "noeq.cfg", "iterations\n");
  EXPECT_THROW(RunConfig().load_file(dir / "noeq.cfg"), ConfigError);
  EXPECT_THROW(RunConfig().load_file(dir / "missing.cfg"), IoError);
  fs::remove_all(dir);
}
