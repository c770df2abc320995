// mrseg: command-line front end.
//
//   mrseg gen        write a synthetic video dataset
//   mrseg train      episodic meta-training, writes model.mrsg + train.jsonl
//   mrseg infer      segment one video from its first-frame mask
//   mrseg eval       J per video and J mean over a dataset
//   mrseg bench      solver wall-time against block split count
//   mrseg gradcheck  finite-difference check of every adjoint
//
// Exit codes: 0 success, 2 usage / configuration error, 1 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrseg.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GenArgs {
  std::string out;
  std::size_t videos = 25;
  std::size_t frames = 12;
  std::size_t size = 64;
  std::uint64_t seed = 1;
};

struct TrainArgs {
  std::string data;
  std::string out;
  mrseg::TrainConfig cfg;
};

struct InferArgs {
  std::string ckpt;
  std::string video_dir;
  std::string out;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string predictions;
};

struct GradArgs {
  mrseg::gradcheck::Options opt;
};

int cmd_gen(const GenArgs& a) {
  if (a.size == 0 || a.size % 8 != 0)
    throw mrseg::ConfigError("--size must be a positive multiple of 8, got " + std::to_string(a.size));
  if (a.frames < 2) throw mrseg::ConfigError("--frames must be at least 2");
  const auto videos = mrseg::generate_dataset(a.seed, a.videos, a.frames, a.size, a.size);
  mrseg::write_dataset(videos, a.out);
  ordered_json summary{{"out", a.out},     {"videos", a.videos}, {"frames", a.frames},
                       {"width", a.size},  {"height", a.size},   {"seed", a.seed}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a) {
  a.cfg.validate();
  const auto dataset = mrseg::read_dataset(a.data);
  if (dataset.empty()) throw mrseg::ConfigError("dataset " + a.data + " has no videos");
  fs::create_directories(a.out);
  const fs::path ckpt = fs::path(a.out) / "model.mrsg";
  std::ofstream metrics(fs::path(a.out) / "train.jsonl");
  if (!metrics) throw mrseg::IoError("cannot write metrics in " + a.out);

  mrseg::Trainer trainer(dataset, a.cfg);
  for (std::size_t step = 0; step < a.cfg.episodes; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = trainer.step();
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    metrics << ordered_json{{"step", step}, {"loss", loss}, {"wall_ms", ms}}.dump() << '\n';
    if (a.cfg.checkpoint_every && (step + 1) % a.cfg.checkpoint_every == 0)
      mrseg::save_checkpoint(ckpt, trainer.model().params, a.cfg);
    if ((step + 1) % 100 == 0) std::cerr << "step " << step + 1 << " loss " << loss << '\n';
  }
  mrseg::save_checkpoint(ckpt, trainer.model().params, a.cfg);
  std::cout << ordered_json{{"checkpoint", ckpt.string()}, {"steps", trainer.steps()}}.dump() << '\n';
  return kExitOk;
}

int cmd_infer(const InferArgs& a) {
  const mrseg::Model model = mrseg::load_checkpoint(a.ckpt);
  const auto frames = mrseg::read_video_dir(a.video_dir);
  if (frames.empty()) throw mrseg::IoError("no frame_0000.ppm in " + a.video_dir);
  if (frames.front().mask.empty())
    throw mrseg::ConfigError("missing first-frame mask mask_0000.pgm in " + a.video_dir);
  mrseg::InferStats stats;
  const auto masks = mrseg::infer_video(model.params, frames, model.config, &stats);
  fs::create_directories(a.out);
  for (std::size_t t = 0; t < masks.size(); ++t)
    mrseg::write_mask(fs::path(a.out) / mrseg::indexed_name("pred", t + 1, "pgm"), masks[t]);
  std::cout << ordered_json{{"masks", masks.size()}, {"fits", stats.fit_count}}.dump() << '\n';
  return kExitOk;
}

std::vector<std::vector<mrseg::Mask>> read_predictions(const std::vector<mrseg::Video>& data,
                                                       const fs::path& root) {
  std::vector<std::vector<mrseg::Mask>> preds;
  for (const auto& v : data) {
    std::vector<mrseg::Mask> m;
    for (std::size_t t = 1; t < v.frames.size(); ++t)
      m.push_back(mrseg::read_mask(root / v.id / mrseg::indexed_name("pred", t, "pgm")));
    preds.push_back(std::move(m));
  }
  return preds;
}

int cmd_eval(const EvalArgs& a) {
  const auto data = mrseg::read_dataset(a.data);
  mrseg::EvalReport rep;
  if (!a.predictions.empty()) {
    rep = mrseg::evaluate_predictions(data, read_predictions(data, a.predictions));
  } else {
    if (a.ckpt.empty()) throw mrseg::ConfigError("eval needs --ckpt or --predictions");
    const mrseg::Model model = mrseg::load_checkpoint(a.ckpt);
    rep = mrseg::evaluate(model.params, data, model.config);
  }
  for (const auto& v : rep.per_video)
    std::cout << ordered_json{{"video", v.video}, {"J", v.j}}.dump() << '\n';
  std::cout << rep.to_json().dump() << '\n';
  std::fprintf(stderr, "%-12s %8s\n", "video", "J");
  for (const auto& v : rep.sorted_by_j()) std::fprintf(stderr, "%-12s %8.4f\n", v.video.c_str(), v.j);
  std::fprintf(stderr, "%-12s %8.4f\n", "J mean", rep.j_mean);
  return kExitOk;
}

int cmd_bench(const mrseg::BenchConfig& cfg, const std::string& json_out) {
  const mrseg::BenchResult res = mrseg::run_bench(cfg);
  std::fprintf(stderr, "%6s %9s %12s %12s %16s %5s\n", "splits", "block_dim", "mean_ms", "stddev_ms",
               "inversion_cost", "reps");
  for (const auto& r : res.table) {
    std::fprintf(stderr, "%6zu %9zu %12.3f %12.3f %16llu %5zu\n", r.splits, r.block_dim, r.mean_ms,
                 r.stddev_ms, static_cast<unsigned long long>(r.inversion_cost), r.repetitions);
    if (r.inversion_cost != static_cast<std::uint64_t>(cfg.feature_dim) * cfg.feature_dim / r.splits)
      throw mrseg::Error("inversion cost column does not equal C^2/S");
  }
  std::cout << res.to_json().dump() << '\n';
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw mrseg::IoError("cannot write " + json_out);
    out << res.to_json().dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const GradArgs& a) {
  mrseg::TrainConfig probe;
  probe.c_out = a.opt.c_out;
  probe.splits = a.opt.splits;
  probe.validate();
  bool ok = true;
  for (const auto& e : mrseg::gradcheck::run_all(a.opt)) {
    std::cout << ordered_json{{"suite", e.suite},
                              {"tensor", e.tensor},
                              {"max_rel_error", e.max_rel_error},
                              {"tolerance", e.tolerance},
                              {"pass", e.pass()}}
                     .dump()
              << '\n';
    if (!e.pass()) {
      std::cerr << "gradient check failed: " << e.suite << " " << e.tensor << " max rel error "
                << e.max_rel_error << " > " << e.tolerance << '\n';
      ok = false;
    }
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learned ridge-regression video object segmentation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "write a synthetic video dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--videos", gen.videos, "number of videos")->capture_default_str();
  g->add_option("--frames", gen.frames, "frames per video")->capture_default_str();
  g->add_option("--size", gen.size, "frame width and height, multiple of 8")->capture_default_str();
  g->add_option("--seed", gen.seed, "generator seed")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "episodic meta-training");
  t->add_option("--data", train.data, "dataset root")->required();
  t->add_option("--out", train.out, "output directory for model.mrsg and train.jsonl")->required();
  t->add_option("--episodes", train.cfg.episodes, "optimizer steps")->capture_default_str();
  t->add_option("--batch", train.cfg.batch, "episodes per step")->capture_default_str();
  t->add_option("--lambda", train.cfg.lambda, "ridge regularizer")->capture_default_str();
  t->add_option("--splits", train.cfg.splits, "block split count")->capture_default_str();
  t->add_option("--cdim", train.cfg.c_out, "feature channels")->capture_default_str();
  t->add_option("--lr", train.cfg.lr, "learning rate")->capture_default_str();
  t->add_option("--momentum", train.cfg.momentum, "SGD momentum")->capture_default_str();
  t->add_option("--weight-decay", train.cfg.weight_decay, "L2 weight decay")->capture_default_str();
  t->add_option("--seed", train.cfg.seed, "initialization and sampling seed")->capture_default_str();
  t->add_option("--checkpoint-every", train.cfg.checkpoint_every, "steps between checkpoints, 0 = end only")
      ->capture_default_str();

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "segment a video from its first-frame mask");
  i->add_option("--ckpt", infer.ckpt, "checkpoint file")->required();
  i->add_option("--video-dir", infer.video_dir, "directory with frame_####.ppm and mask_0000.pgm")
      ->required();
  i->add_option("--out", infer.out, "directory for pred_####.pgm")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "J per video and J mean");
  e->add_option("--ckpt", eval.ckpt, "checkpoint file");
  e->add_option("--data", eval.data, "dataset root")->required();
  e->add_option("--predictions", eval.predictions,
                "score video_####/pred_####.pgm masks under this root instead of running a model");

  mrseg::BenchConfig bench;
  std::string bench_json;
  auto* b = app.add_subcommand("bench", "solver time against split count");
  b->add_option("--cdim", bench.feature_dim, "feature dimension C")->capture_default_str();
  b->add_option("--rows", bench.rows, "rows of the design matrix (h*w)")->capture_default_str();
  b->add_option("--splits", bench.splits, "comma-separated split counts")
      ->delimiter(',')
      ->capture_default_str();
  b->add_option("--reps", bench.repetitions, "repetitions per split count")->capture_default_str();
  b->add_option("--seed", bench.seed, "data seed")->capture_default_str();
  b->add_option("--json", bench_json, "also write the result JSON here");

  GradArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all adjoints");
  gc->add_option("--cdim", grad.opt.c_out, "feature channels of the episode check")->capture_default_str();
  gc->add_option("--splits", grad.opt.splits, "block split count")->capture_default_str();
  gc->add_option("--seed", grad.opt.seed, "seed")->capture_default_str();
  gc->add_flag("--corrupt-adjoint", grad.opt.corrupt_adjoint,
               "test fixture: perturb one analytic gradient entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(train);
    if (*i) return cmd_infer(infer);
    if (*e) return cmd_eval(eval);
    if (*b) return cmd_bench(bench, bench_json);
    if (*gc) return cmd_gradcheck(grad);
  } catch (const mrseg::ConfigError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
