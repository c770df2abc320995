#include <gtest/gtest.h>

#include <filesystem>

#include "json.hpp"
#include "mrseg/synthvid.hpp"
#include "process.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testproc::q;
using testproc::run_cli;

namespace {

// Small dataset shared by the train / infer / eval cases.
const fs::path& tiny_data() {
  static const fs::path p = [] {
    const fs::path d = testproc::fresh_dir("cli/tiny");
    const auto r = run_cli("gen --out " + q(d) + " --videos 3 --frames 4 --size 32 --seed 5");
    EXPECT_EQ(r.code, 0);
    return d;
  }();
  return p;
}

const fs::path& tiny_model() {
  static const fs::path p = [] {
    const fs::path out = testproc::fresh_dir("cli/model");
    const auto r = run_cli("train --data " + q(tiny_data()) + " --out " + q(out) +
                           " --episodes 4 --cdim 16 --splits 2");
    EXPECT_EQ(r.code, 0) << r.out;
    return out / "model.mrsg";
  }();
  return p;
}

TEST(CliGen, DefaultLayout) {
  const fs::path d = testproc::fresh_dir("cli/gen_default");
  const auto r = run_cli("gen --out " + q(d));
  ASSERT_EQ(r.code, 0);
  const json summary = json::parse(r.out);
  EXPECT_EQ(summary["videos"], 25);
  EXPECT_EQ(summary["frames"], 12);
  EXPECT_EQ(summary["width"], 64);
  const json manifest = json::parse(testproc::slurp(d / "manifest.json"));
  ASSERT_EQ(manifest["videos"].size(), 25u);
  EXPECT_TRUE(fs::exists(d / "video_0024" / "frame_0011.ppm"));
  EXPECT_TRUE(fs::exists(d / "video_0024" / "mask_0011.pgm"));
  EXPECT_FALSE(fs::exists(d / "video_0025"));
}

TEST(CliGen, ReproducibleBytes) {
  const fs::path a = testproc::fresh_dir("cli/gen_a"), b = testproc::fresh_dir("cli/gen_b");
  ASSERT_EQ(run_cli("gen --out " + q(a) + " --videos 2 --frames 3 --size 32 --seed 7").code, 0);
  ASSERT_EQ(run_cli("gen --out " + q(b) + " --videos 2 --frames 3 --size 32 --seed 7").code, 0);
  EXPECT_TRUE(testproc::same_tree(a, b));
}

TEST(CliGen, SizeMustBeMultipleOfEight) {
  const fs::path d = testproc::fresh_dir("cli/gen_bad");
  EXPECT_EQ(run_cli("gen --out " + q(d) + " --size 60").code, 2);
}

TEST(CliGen, UnknownFlagIsUsageError) {
  EXPECT_EQ(run_cli("gen --bogus").code, 2);
  EXPECT_EQ(run_cli("").code, 2);
}

TEST(CliTrain, OneMetricsLinePerStep) {
  const fs::path out = testproc::fresh_dir("cli/train_lines");
  const auto r = run_cli("train --data " + q(tiny_data()) + " --out " + q(out) +
                         " --episodes 6 --cdim 16 --splits 4");
  ASSERT_EQ(r.code, 0);
  const auto lines = testproc::lines(testproc::slurp(out / "train.jsonl"));
  ASSERT_EQ(lines.size(), 6u);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json j = json::parse(lines[i]);
    EXPECT_EQ(j["step"], i);
    EXPECT_TRUE(j["loss"].is_number());
    EXPECT_TRUE(j["wall_ms"].is_number());
  }
  EXPECT_TRUE(fs::exists(out / "model.mrsg"));
}

TEST(CliTrain, ZeroEpisodesWritesInitialModel) {
  const fs::path out = testproc::fresh_dir("cli/train_zero");
  const auto r = run_cli("train --data " + q(tiny_data()) + " --out " + q(out) +
                         " --episodes 0 --cdim 16");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(testproc::lines(testproc::slurp(out / "train.jsonl")).empty());
  EXPECT_TRUE(fs::exists(out / "model.mrsg"));
}

TEST(CliTrain, SplitsMustDivideFeatureDim) {
  const fs::path out = testproc::fresh_dir("cli/train_bad");
  EXPECT_EQ(run_cli("train --data " + q(tiny_data()) + " --out " + q(out) +
                    " --splits 3 --cdim 64 --episodes 1")
                .code,
            2);
  EXPECT_EQ(run_cli("train --data " + q(tiny_data()) + " --out " + q(out) +
                    " --lambda 0 --cdim 16 --episodes 1")
                .code,
            2);
}

TEST(CliTrain, MissingDatasetIsRuntimeError) {
  const fs::path out = testproc::fresh_dir("cli/train_missing");
  EXPECT_EQ(run_cli("train --data " + q(out / "nope") + " --out " + q(out)).code, 1);
}

TEST(CliInfer, WritesOneMaskPerQueryFrame) {
  const fs::path out = testproc::fresh_dir("cli/infer");
  const auto r = run_cli("infer --ckpt " + q(tiny_model()) + " --video-dir " +
                         q(tiny_data() / "video_0000") + " --out " + q(out));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out)["masks"], 3);
  EXPECT_EQ(json::parse(r.out)["fits"], 1);
  EXPECT_FALSE(fs::exists(out / "pred_0000.pgm"));
  for (int t = 1; t <= 3; ++t) {
    const auto m = mrseg::read_mask(out / mrseg::indexed_name("pred", t, "pgm"));
    EXPECT_EQ(m.width, 32u);
  }
  EXPECT_FALSE(fs::exists(out / "pred_0004.pgm"));
}

TEST(CliInfer, MissingFirstMaskIsAnError) {
  const fs::path vid = testproc::fresh_dir("cli/nomask");
  for (const auto& e : fs::directory_iterator(tiny_data() / "video_0001"))
    fs::copy_file(e.path(), vid / e.path().filename());
  fs::remove(vid / "mask_0000.pgm");
  const auto r = run_cli("infer --ckpt " + q(tiny_model()) + " --video-dir " + q(vid) + " --out " +
                         q(testproc::fresh_dir("cli/nomask_out")));
  EXPECT_NE(r.code, 0);
}

TEST(CliInfer, BadCheckpointIsRuntimeError) {
  const fs::path d = testproc::fresh_dir("cli/badckpt");
  { std::ofstream(d / "x.mrsg") << "not a checkpoint"; }
  EXPECT_EQ(run_cli("infer --ckpt " + q(d / "x.mrsg") + " --video-dir " +
                    q(tiny_data() / "video_0000") + " --out " + q(d))
                .code,
            1);
}

TEST(CliEval, GroundTruthPredictionsScoreOne) {
  const fs::path preds = testproc::fresh_dir("cli/gt_preds");
  for (const char* id : {"video_0000", "video_0001", "video_0002"}) {
    fs::create_directories(preds / id);
    for (int t = 1; t < 4; ++t)
      fs::copy_file(tiny_data() / id / mrseg::indexed_name("mask", t, "pgm"),
                    preds / id / mrseg::indexed_name("pred", t, "pgm"));
  }
  const auto r = run_cli("eval --data " + q(tiny_data()) + " --predictions " + q(preds));
  ASSERT_EQ(r.code, 0);
  const auto lines = testproc::lines(r.out);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(json::parse(lines[0])["video"], "video_0000");
  EXPECT_EQ(json::parse(lines[0])["J"], 1.0);
  EXPECT_EQ(json::parse(lines.back())["j_mean"], 1.0);
}

TEST(CliEval, ModelReportIsWellFormed) {
  const auto r = run_cli("eval --data " + q(tiny_data()) + " --ckpt " + q(tiny_model()));
  ASSERT_EQ(r.code, 0);
  const auto lines = testproc::lines(r.out);
  ASSERT_EQ(lines.size(), 4u);
  const json rep = json::parse(lines.back());
  EXPECT_GE(rep["j_mean"].get<double>(), 0.0);
  EXPECT_LE(rep["j_mean"].get<double>(), 1.0);
  EXPECT_EQ(rep["per_frame"].size(), 9u);
}

TEST(CliEval, NeedsModelOrPredictions) {
  EXPECT_EQ(run_cli("eval --data " + q(tiny_data())).code, 2);
}

TEST(CliBench, SingleRepetitionHasZeroSpread) {
  const auto r = run_cli("bench --cdim 64 --rows 256 --splits 1,2,4 --reps 1");
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  ASSERT_EQ(j["results"].size(), 3u);
  for (const auto& row : j["results"]) {
    EXPECT_EQ(row["stddev_ms"], 0.0);
    EXPECT_EQ(row["repetitions"], 1);
    EXPECT_EQ(row["inversion_cost"], 64u * 64u / row["splits"].get<unsigned>());
  }
}

TEST(CliBench, RejectsNonDividingSplit) {
  EXPECT_EQ(run_cli("bench --cdim 64 --rows 64 --splits 3 --reps 1").code, 2);
  EXPECT_EQ(run_cli("bench --cdim 64 --rows 64 --reps 0").code, 2);
}

TEST(CliGradcheck, PassesForSeveralSplits) {
  for (const char* s : {"1", "2", "4"}) {
    const auto r = run_cli(std::string("gradcheck --splits ") + s);
    EXPECT_EQ(r.code, 0) << "splits " << s << "\n" << r.out;
    for (const auto& line : testproc::lines(r.out)) EXPECT_TRUE(json::parse(line)["pass"].get<bool>());
  }
}

TEST(CliGradcheck, CorruptedAdjointFails) {
  const auto r = run_cli("gradcheck --corrupt-adjoint");
  EXPECT_NE(r.code, 0);
  bool any_fail = false;
  for (const auto& line : testproc::lines(r.out)) any_fail |= !json::parse(line)["pass"].get<bool>();
  EXPECT_TRUE(any_fail);
}

}  // namespace
