#include <gtest/gtest.h>

#include <filesystem>

#include "cli_runner.hpp"

namespace fs = std::filesystem;
using cli_runner::run;
using cli_runner::slurp;

namespace {

const char* kSmall =
    "--min-width 640 --max-width 640 --min-height 480 --max-height 480 --channels 6 --hidden-dim 8 --pool-grid 2";

std::int64_t total_column(const std::string& counters_csv, int column) {
  const auto pos = counters_csv.find("TOTAL,");
  std::string rest = counters_csv.substr(pos);
  for (int i = 0; i < column; ++i) rest = rest.substr(rest.find(',') + 1);
  return std::stoll(rest.substr(0, rest.find_first_of(",\n")));
}

}  // namespace

TEST(Cli, GenZeroScenes) {
  const auto dir = cli_runner::fresh_dir("zoomprop_cli_gen0");
  const auto r = run(dir, "gen --count 0 --data-dir d");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("# zoomprop gen effective config"), std::string::npos);
  EXPECT_NE(r.out.find("count = 0"), std::string::npos);
  EXPECT_EQ(slurp(dir / "d" / "annotations.jsonl"), "");
  EXPECT_TRUE(fs::exists(dir / "d" / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Cli, ErrorsExitWithOne) {
  const auto dir = cli_runner::fresh_dir("zoomprop_cli_err");
  auto r = run(dir, "train --data-dir does-not-exist");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  r = run(dir, "propose --zoom-threshold 2 --model none.scnt");
  EXPECT_EQ(r.exit_code, 1);
  r = run(dir, "gen --count -1");
  EXPECT_EQ(r.exit_code, 1);
  r = run(dir, "frobnicate");
  EXPECT_NE(r.exit_code, 0);
  r = run(dir, "gen --no-such-flag 3");
  EXPECT_NE(r.exit_code, 0);
  fs::remove_all(dir);
}

TEST(Cli, EndToEndSmall) {
  const auto dir = cli_runner::fresh_dir("zoomprop_cli_e2e");
  const std::string common = std::string(kSmall) + " --data-dir d --model m.scnt";
  auto r = run(dir, "gen --count 3 --seed 5 " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = run(dir, "train --iterations 20 " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "m.scnt"));
  EXPECT_TRUE(fs::exists(dir / "loss.csv"));

  r = run(dir, "propose --conf-threshold 1.0 " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "proposals.csv"), "image_id,x1,y1,x2,y2,score,provenance\n");

  r = run(dir, "propose --strategy zoom --zoom-threshold 0.01 --counters zoom.csv " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = run(dir, "propose --strategy dense --counters dense.csv " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string zoom = slurp(dir / "zoom.csv"), dense = slurp(dir / "dense.csv");
  EXPECT_GT(total_column(dense, 1), total_column(zoom, 1));
  EXPECT_GT(total_column(dense, 2), total_column(zoom, 2));

  r = run(dir, "sweep --thresholds 0.5,0.1 " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string curve = slurp(dir / "curve.csv");
  EXPECT_EQ(curve.rfind("strategy,threshold,recall,", 0), 0u);
  EXPECT_NE(r.out.find(curve), std::string::npos);

  r = run(dir, "eval --eval-proposals proposals.csv --curve ecurve.csv " + common);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(slurp(dir / "recall.csv").find("scene_00002,"), std::string::npos);
  EXPECT_NE(slurp(dir / "ecurve.csv").find("proposals_file,"), std::string::npos);
  fs::remove_all(dir);
}
