#include <gtest/gtest.h>

#include <cstdlib>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include "leafwood/cloud.hpp"
#include "leafwood/evaluation.hpp"
#include "leafwood/network.hpp"
#include "leafwood/prior_features.hpp"
#include "leafwood/synthgen.hpp"
#include "test_util.hpp"

namespace leafwood {
namespace {

using testing::TempDir;
using testing::read_text;
using testing::write_text;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" LEAFWOOD_CLI_PATH "' " + args +
                          " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(out), read_text(err)};
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

SynthTreeSpec small_spec(std::uint64_t seed = 1) {
  SynthTreeSpec s;
  s.seed = seed;
  s.branch_count = 4;
  s.leaf_cluster_count = 4;
  s.leaf_points_per_cluster = 300;
  s.surface_sample_pitch_m = 0.045;
  s.trunk_height_m = 3.0;
  return s;
}

// Small model so CLI training stays fast.
constexpr const char* kSmallConfig =
    "# test model\n"
    "preset = toy\n"
    "level1_centroids = 64\n"
    "level2_centroids = 16\n"
    "block_points = 512\n"
    "epochs = 3\n"
    "lr = 0.005\n";

TEST(Cli, FeaturizeLineAndIdempotence) {
  TempDir dir;
  std::vector<Point3> line;
  for (int i = 0; i < 200; ++i) line.push_back({i * 0.01, 0, 0});
  save_xyz(LabeledCloud(line), dir / "line.xyz");
  auto r = run(dir, "featurize --in line.xyz --out a.xyz");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto a = load_xyz(dir / "a.xyz");
  for (double v : a.linearity()) EXPECT_GE(v, 0.999);

  r = run(dir, "featurize --in a.xyz --out b.xyz");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto b = load_xyz(dir / "b.xyz");
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.linearity()[i], b.linearity()[i], 1e-9);
}

TEST(Cli, MissingInputNamesThePath) {
  TempDir dir;
  const auto r = run(dir, "featurize --in does_not_exist.xyz --out x.xyz");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("does_not_exist.xyz"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "x.xyz"));
}

TEST(Cli, ParseErrorsCarryLineNumbers) {
  TempDir dir;
  write_text(dir / "bad.xyz", "0 0 0\n1 1 1\n2 two 2\n");
  const auto r = run(dir, "featurize --in bad.xyz --out x.xyz");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Cli, TrainZeroEpochsWritesInitialParamsAndFlagsWin) {
  TempDir dir;
  save_xyz(generate_tree(small_spec()), dir / "t.xyz");
  write_text(dir / "small.cfg", kSmallConfig);
  const auto r = run(dir, "train t.xyz --config small.cfg --epochs 0 --seed 5 --checkpoint m.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(ck.config.level1.num_centroids, 64u);
  EXPECT_EQ(ck.params, init_params(ck.config, 5));
}

TEST(Cli, TrainIsDeterministicAndReducesLoss) {
  TempDir dir;
  auto tree = generate_tree(small_spec());
  save_xyz(tree, dir / "t.xyz");
  write_text(dir / "small.cfg", kSmallConfig);
  write_text(dir / "train.lst", "t.xyz\n");
  auto r = run(dir, "train --list train.lst --config small.cfg --checkpoint a.ckpt --report a.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  r = run(dir, "train t.xyz --config small.cfg --checkpoint b.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text(dir / "a.ckpt"), read_text(dir / "b.ckpt"));
  const auto kv = key_values(read_text(dir / "a.txt"));
  ASSERT_EQ(kv.at("epochs"), "3");
  EXPECT_LT(std::stod(kv.at("loss_epoch_2")), std::stod(kv.at("loss_epoch_0")));
}

TEST(Cli, PredictMatchesLibraryAndReportsTpmp) {
  TempDir dir;
  auto tree = generate_tree(small_spec(2));
  tree = std::move(tree).with_linearity(compute_linearity_field(tree, build_index(tree)).values);
  save_xyz(tree, dir / "t.xyz");
  write_text(dir / "small.cfg", kSmallConfig);
  ASSERT_EQ(run(dir, "train t.xyz --config small.cfg --epochs 1 --checkpoint m.ckpt").code, 0);

  const auto r = run(dir, "predict --checkpoint m.ckpt --in t.xyz --out p.xyz --max-points 1500 --report time.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto pred = load_xyz(dir / "p.xyz");
  ASSERT_EQ(pred.size(), tree.size());
  ASSERT_TRUE(pred.has_labels());

  const auto ck = load_checkpoint(dir / "m.ckpt");
  const auto expected = predict(ck.params, ck.config, load_xyz(dir / "t.xyz"), 1500);
  EXPECT_TRUE(std::equal(expected.begin(), expected.end(), pred.labels().begin()));

  const auto kv = key_values(read_text(dir / "time.txt"));
  const double points = std::stod(kv.at("total_points"));
  const double secs = std::stod(kv.at("wall_seconds"));
  EXPECT_EQ(points, static_cast<double>(tree.size()));
  EXPECT_NEAR(std::stod(kv.at("tpmp")), secs * 1e6 / points, 1e-9);
}

TEST(Cli, PredictFeaturizesRawInput) {
  TempDir dir;
  const auto tree = generate_tree(small_spec(3));
  save_xyz(tree.without_labels(), dir / "raw.xyz");
  save_checkpoint({ModelConfig::micro(), init_params(ModelConfig::micro(), 1)}, dir / "m.ckpt");
  const auto r = run(dir, "predict --checkpoint m.ckpt --in raw.xyz --out p.xyz");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pred = load_xyz(dir / "p.xyz");
  EXPECT_EQ(pred.size(), tree.size());
  EXPECT_TRUE(pred.has_linearity());
}

TEST(Cli, EvaluateMatchesLibraryBitwise) {
  TempDir dir;
  auto truth = generate_tree(small_spec(4));
  std::vector<ClassLabel> flipped(truth.labels().begin(), truth.labels().end());
  for (std::size_t i = 0; i < flipped.size(); i += 7) {
    flipped[i] = flipped[i] == ClassLabel::wood ? ClassLabel::leaf : ClassLabel::wood;
  }
  save_xyz(truth, dir / "truth.xyz");
  save_xyz(truth.with_labels(flipped), dir / "pred.xyz");

  auto r = run(dir, "evaluate --pred pred.xyz --truth truth.xyz --report m.txt --json m.json --name oak");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lib = evaluate(flipped, truth.labels());
  const auto kv = key_values(read_text(dir / "m.txt"));
  EXPECT_EQ(std::stod(kv.at("oa")), lib.oa);
  EXPECT_EQ(std::stod(kv.at("f1")), lib.f1);
  EXPECT_EQ(std::stod(kv.at("miou")), lib.miou);
  EXPECT_EQ(std::stod(kv.at("specificity")), lib.specificity);
  EXPECT_EQ(std::stoull(kv.at("fp")), lib.counts.fp);
  EXPECT_NE(read_text(dir / "m.json").find("\"tree\": \"oak\""), std::string::npos);

  r = run(dir, "evaluate --pred truth.xyz --truth truth.xyz --report same.txt");
  ASSERT_EQ(r.code, 0);
  const auto same = key_values(read_text(dir / "same.txt"));
  for (const char* k : {"oa", "miou", "f1", "precision", "recall"}) EXPECT_EQ(same.at(k), "1") << k;

  save_xyz(truth.subset(std::vector<std::size_t>{0, 1, 2}), dir / "short.xyz");
  r = run(dir, "evaluate --pred short.xyz --truth truth.xyz");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Cli, BenchReportsAndRejectsTooFewRepeats) {
  TempDir dir;
  auto r = run(dir, "bench --n 5000 --k 64 --repeats 3 --report b.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = key_values(read_text(dir / "b.txt"));
  EXPECT_EQ(kv.at("n"), "5000");
  EXPECT_GT(std::stod(kv.at("random_speedup")), 1.0);
  r = run(dir, "bench --n 5000 --k 64 --repeats 0");
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ColorizeSplitSampleAndSynth) {
  TempDir dir;
  auto r = run(dir, "synth --out s.xyz --seed 3 --branches 4 --leaf-clusters 4 --leaf-points 200");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tree = load_xyz(dir / "s.xyz");
  EXPECT_EQ(tree.size(), tree.labels().size());

  ASSERT_EQ(run(dir, "colorize --in s.xyz --out s.ply --binary").code, 0);
  const auto ply = load_colored_ply(dir / "s.ply");
  EXPECT_TRUE(std::equal(ply.labels().begin(), ply.labels().end(), tree.labels().begin()));

  ASSERT_EQ(run(dir, "split --in s.xyz --out-dir chunks --max-points 5000").code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "chunks" / "s.chunk0.xyz"));
  EXPECT_TRUE(std::filesystem::exists(dir / "chunks" / "s.chunk0.idx"));

  ASSERT_EQ(run(dir, "sample --in s.xyz --out idx.txt --k 10 --sampling random --seed 4").code, 0);
  ASSERT_EQ(run(dir, "sample --in s.xyz --out idx2.txt --k 10 --sampling random --seed 4").code, 0);
  EXPECT_EQ(read_text(dir / "idx.txt"), read_text(dir / "idx2.txt"));
  const auto idx = read_text(dir / "idx.txt");
  EXPECT_EQ(std::count(idx.begin(), idx.end(), '\n'), 10);
}

TEST(Cli, UsageErrorsExitNonZero) {
  TempDir dir;
  EXPECT_NE(run(dir, "").code, 0);
  EXPECT_NE(run(dir, "sample --in x.xyz --out y --sampling grid").code, 0);
  write_text(dir / "bad.cfg", "no_such_key = 1\n");
  save_xyz(LabeledCloud({{0, 0, 0}}), dir / "p.xyz");
  const auto r = run(dir, "featurize --in p.xyz --out q.xyz --config bad.cfg");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
}

}  // namespace
}  // namespace leafwood
