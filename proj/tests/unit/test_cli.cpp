#include "cli/cli.hpp"
#include "siriib/checkpoint.hpp"
#include "siriib/results.hpp"
#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

namespace siriib {
namespace {

using siriib::testing::TempDir;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
  std::filesystem::path dir;
};

// Tiny, fast settings shared by the commands that train.
const std::vector<std::string> kTiny{
    "--set", "base_width=8",       "--set", "train_size=60",      "--set", "test_size=40",
    "--set", "batch_size=30",      "--set", "eval_batch_size=40", "--set", "train_attack.steps=1",
    "--set", "epochs=1"};

Outcome invoke(std::vector<std::string> args, const TempDir& root, bool tiny = true) {
  args.push_back("--out");
  args.push_back(root.path().string());
  if (tiny) args.insert(args.end(), kTiny.begin(), kTiny.end());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  const std::string marker = "run directory: ";
  if (auto p = o.out.find(marker); p != std::string::npos) {
    auto end = o.out.find('\n', p);
    o.dir = o.out.substr(p + marker.size(), end - p - marker.size());
  }
  return o;
}

TEST(Cli, UnknownOrMissingSubcommandIsUsageError) {
  TempDir root;
  auto o = invoke({"bogus"}, root, false);
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("param-count"), std::string::npos);
  std::ostringstream out, err;
  EXPECT_NE(cli::run({}, out, err), 0);
  EXPECT_EQ(cli::run({"--help"}, out, err), 0);
  EXPECT_NE(out.str().find("dedicated flags"), std::string::npos);
}

TEST(Cli, ParamCountPrintsResNetSize) {
  TempDir root;
  auto o = invoke({"param-count"}, root, false);
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("11.17 M"), std::string::npos) << o.out;
  EXPECT_TRUE(std::filesystem::exists(o.dir / "config.txt"));
  EXPECT_TRUE(std::filesystem::exists(o.dir / "results.txt"));
  auto rows = read_json_lines(o.dir / "results.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[0]["Params (M)"].get<double>(), 11.17, 0.01);
}

TEST(Cli, ConfigErrorsExitOne) {
  TempDir root;
  EXPECT_EQ(invoke({"param-count", "--set", "num_proj=4"}, root, false).code, 1);
  EXPECT_EQ(invoke({"train", "--set", "epochs=abc"}, root, false).code, 1);
  EXPECT_EQ(invoke({"train", "--config", (root / "missing.cfg").string()}, root).code, 1);
  EXPECT_EQ(invoke({"attack-eval", "--attacks", "fgsm3"}, root).code, 1);
  EXPECT_EQ(invoke({"train", "--set", "noequals"}, root).code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  TempDir root;
  std::ofstream(root / "bad.ckpt") << "not a checkpoint";
  auto o = invoke({"attack-eval", "--checkpoint", (root / "bad.ckpt").string()}, root);
  EXPECT_EQ(o.code, 2);
  EXPECT_FALSE(o.err.empty());
}

TEST(Cli, FlagsBeatOverridesBeatConfigFile) {
  TempDir root;
  std::ofstream(root / "run.cfg") << "seed = 5\nbase_width = 16\n";
  auto o = invoke({"param-count", "--config", (root / "run.cfg").string(), "--set", "seed=6",
                   "--seed", "7"},
                  root, false);
  ASSERT_EQ(o.code, 0) << o.err;
  auto resolved = Config::load(o.dir / "config.txt");
  EXPECT_EQ(resolved.get_int("seed", 0), 7);
  EXPECT_EQ(resolved.get_int("base_width", 0), 16);
  EXPECT_NE(o.dir.filename().string().find("-s7"), std::string::npos);
}

TEST(Cli, TrainWritesRunDirectoryAndReproducesFromConfig) {
  TempDir root;
  auto first = invoke({"train", "--set", "siriib=true"}, root);
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_TRUE(std::filesystem::exists(first.dir / "checkpoints" / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(first.dir / "checkpoints" / "epoch-1.ckpt"));
  auto metrics = read_json_lines(first.dir / "metrics.jsonl");
  ASSERT_EQ(metrics.size(), 1u);
  EXPECT_TRUE(metrics[0].contains("loss_svd"));

  auto again = invoke({"train", "--config", (first.dir / "config.txt").string()}, root, false);
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(read_json_lines(again.dir / "metrics.jsonl"), metrics);
  EXPECT_EQ(read_json_lines(again.dir / "results.jsonl"),
            read_json_lines(first.dir / "results.jsonl"));
}

TEST(Cli, SvdSwapWithZeroBudgetGivesEqualPair) {
  TempDir root;
  auto o = invoke({"svd-swap", "--set", "attack_eps=0", "--attacks", "pgd5"}, root);
  ASSERT_EQ(o.code, 0) << o.err;
  auto rows = read_json_lines(o.dir / "results.jsonl");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["Robust"], rows[0]["Swapped"]);
  EXPECT_TRUE(std::filesystem::exists(o.dir / "images" / "swap-pgd5.png"));
}

TEST(Cli, AblateLambdaGivesOneRowPerValue) {
  TempDir root;
  auto o = invoke({"ablate", "--lambda1", "1,5,20", "--set", "ablate_attacks=pgd2"}, root);
  ASSERT_EQ(o.code, 0) << o.err;
  auto rows = read_json_lines(o.dir / "results.jsonl");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0]["lambda1"], "1");
  EXPECT_EQ(rows[2]["lambda1"], "20");
  EXPECT_TRUE(rows[1].contains("Clean"));
  EXPECT_TRUE(rows[1].contains("PGD2"));
  EXPECT_EQ(invoke({"ablate"}, root).code, 1);
}

TEST(Cli, ArchiveExportAndReingestReproduceAccuracy) {
  TempDir root;
  auto trained = invoke({"train", "--set", "siriib=false"}, root);
  ASSERT_EQ(trained.code, 0) << trained.err;
  const auto ckpt = (trained.dir / "checkpoints" / "final.ckpt").string();
  auto exported = invoke(
      {"attack-eval", "--checkpoint", ckpt, "--attacks", "pgd3", "--export-archive"}, root);
  ASSERT_EQ(exported.code, 0) << exported.err;
  const auto stem = (exported.dir / "archives" / "pgd3").string();
  auto reread = invoke({"attack-eval", "--checkpoint", ckpt, "--attacks", "pgd3", "--archive", stem},
                       root);
  ASSERT_EQ(reread.code, 0) << reread.err;
  auto rows = read_json_lines(reread.dir / "results.jsonl");
  EXPECT_EQ(rows[0]["Archive"], rows[0]["PGD3"]);
  EXPECT_NE(reread.out.find("0 over budget"), std::string::npos);
}

TEST(Cli, VisualizeAndGreyBoxProduceArtifacts) {
  TempDir root;
  auto viz = invoke({"sr-visualize", "--set", "viz_count=3", "--set", "eval_attacks=pgd2"}, root);
  ASSERT_EQ(viz.code, 0) << viz.err;
  EXPECT_TRUE(std::filesystem::exists(viz.dir / "images" / "panel.png"));
  EXPECT_TRUE(std::filesystem::exists(viz.dir / "images" / "x_avg-2.png"));

  auto grey = invoke({"grey-box", "--set", "sr_epochs=1", "--set", "grey_attacks=pgd2"}, root);
  ASSERT_EQ(grey.code, 0) << grey.err;
  auto rows = read_json_lines(grey.dir / "results.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1]["Input"], "x_avg");
}

}  // namespace
}  // namespace siriib
