#ifndef MRSEG_PIPELINE_HPP
#define MRSEG_PIPELINE_HPP

/// \file pipeline.hpp
/// \brief Episodic meta-training and first-frame-conditioned inference.
///
/// One episode: encode reference and query with the same encoder, fit the
/// ridge mapping on the reference features against the recentered pooled
/// reference mask (2y - 1), predict query logits, score them with BCE against
/// the pooled query mask, and backpropagate through predict, fit and both
/// encoder passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mrseg/encoder.hpp"
#include "mrseg/errors.hpp"
#include "mrseg/loss.hpp"
#include "mrseg/optimizer.hpp"
#include "mrseg/ridge.hpp"
#include "mrseg/rng.hpp"
#include "mrseg/synthvid.hpp"
#include "mrseg/tensor.hpp"

namespace mrseg {

struct TrainConfig {
  std::size_t episodes = 2000;  ///< optimizer steps
  std::size_t batch = 1;        ///< episodes averaged per step
  double lambda = 5.0;
  std::size_t splits = 2;
  std::size_t c_out = 64;
  bool bias = true;
  double bce_weight = 1.0;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 42;
  std::size_t checkpoint_every = 0;  ///< 0: only the final checkpoint

  RidgeConfig ridge() const { return {lambda, splits, bias}; }
  SgdHyper sgd() const { return {lr, momentum, weight_decay}; }

  void validate() const {
    if (batch == 0) throw ConfigError("batch must be positive");
    if (c_out == 0) throw ConfigError("feature dimension must be positive");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive for training");
    if (!(lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0) || !(bce_weight > 0.0))
      throw ConfigError("optimizer hyperparameters must be nonnegative");
    ridge().validate(c_out);
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Episode {
  const Frame* reference = nullptr;
  const Frame* query = nullptr;
  std::size_t video = 0;
  std::size_t reference_index = 0;
  std::size_t query_index = 0;
};

/// Uniform video, then a uniform ordered pair of distinct frames. Videos with
/// fewer than two frames are never drawn.
inline Episode sample_episode(const std::vector<Video>& dataset, Rng& rng) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (dataset[i].frames.size() >= 2) usable.push_back(i);
  if (usable.empty()) throw ConfigError("dataset has no video with at least two frames");
  const std::size_t v = usable[rng.below(usable.size())];
  const std::size_t n = dataset[v].frames.size();
  const std::size_t r = rng.below(n);
  std::size_t q = rng.below(n - 1);
  if (q >= r) ++q;
  return {&dataset[v].frames[r], &dataset[v].frames[q], v, r, q};
}

/// Pooled mask at feature resolution mapped to ridge targets in [-1, 1].
inline Matrix ridge_targets(const Mask& mask, std::size_t stride) {
  Matrix y = pool_mask(mask, stride);
  for (double& v : y.data()) v = 2.0 * v - 1.0;
  return y;
}

/// Loss of one episode; when `grads` is non-null, adds the gradient with
/// respect to the encoder parameters (scaled by `grad_scale`).
inline double episode_loss(const EncoderParams& params, const Tensor3& ref_image,
                           const Mask& ref_mask, const Tensor3& query_image,
                           const Mask& query_mask, const TrainConfig& cfg,
                           EncoderParams* grads = nullptr, double grad_scale = 1.0) {
  const std::size_t stride = params.total_stride();
  const EncodeTrace tr = encode_traced(params, ref_image);
  const EncodeTrace tq = encode_traced(params, query_image);
  const Matrix x_r = flatten(tr.output());
  const Matrix x_q = flatten(tq.output());
  const Matrix y_r = ridge_targets(ref_mask, stride);
  const Matrix t_q = pool_mask(query_mask, stride);
  const RidgeConfig rc = cfg.ridge();
  const RidgeSolution sol = block_split_fit(x_r, y_r, rc);
  const Matrix logits = ridge_predict(x_q, sol);
  BceResult bce = bce_with_logits(logits, t_q, cfg.bce_weight);
  if (grads) {
    for (double& g : bce.d_logits.data()) g *= grad_scale;
    const RidgeAdjoints adj = ridge_backward(x_r, y_r, rc, sol, x_q, bce.d_logits);
    const auto& fr = tr.output();
    const auto& fq = tq.output();
    encode_backward_accumulate(params, tr, unflatten(adj.d_x, fr.height(), fr.width()), *grads);
    encode_backward_accumulate(params, tq, unflatten(adj.d_fq, fq.height(), fq.width()), *grads);
  }
  return bce.loss;
}

/// One optimizer step on a batch of episodes; gradients are averaged over the
/// batch. Returns the mean loss.
inline double train_step(EncoderParams& params, OptimizerState& state,
                         std::span<const Episode> episodes, const TrainConfig& cfg) {
  if (episodes.empty()) throw ConfigError("train_step needs at least one episode");
  EncoderParams grads = params.zeros_like();
  const double scale = 1.0 / static_cast<double>(episodes.size());
  double loss = 0.0;
  for (const Episode& e : episodes)
    loss += scale * episode_loss(params, e.reference->image, e.reference->mask, e.query->image,
                                 e.query->mask, cfg, &grads, scale);
  if (!std::isfinite(loss)) throw NumericError("non-finite episode loss");
  bool finite = true;
  for_each_param(grads, [&](const std::string&, std::span<const double> g) {
    finite = finite && all_finite(g);
  });
  if (!finite) throw NumericError("non-finite gradient");
  sgd_momentum_step(params, grads, state);
  return loss;
}

struct Model {
  EncoderParams params;
  TrainConfig config;
};

inline Model init_model(const TrainConfig& cfg) {
  cfg.validate();
  return {init_encoder(default_arch(cfg.c_out), mix_seed(cfg.seed, 0)), cfg};
}

/// Owns the optimizer loop. The episode stream and initialization are fully
/// determined by cfg.seed.
class Trainer {
 public:
  Trainer(const std::vector<Video>& dataset, const TrainConfig& cfg)
      : dataset_(dataset),
        model_(init_model(cfg)),
        state_(OptimizerState::for_params(model_.params, cfg.sgd())),
        rng_(mix_seed(cfg.seed, 1)) {}

  /// Runs one step; throws NumericError naming the step on failure.
  double step() {
    std::vector<Episode> batch;
    for (std::size_t i = 0; i < model_.config.batch; ++i) batch.push_back(sample_episode(dataset_, rng_));
    try {
      const double loss = train_step(model_.params, state_, batch, model_.config);
      ++steps_;
      return loss;
    } catch (const Error& e) {
      throw NumericError("training step " + std::to_string(steps_) + ": " + e.what());
    }
  }

  std::size_t steps() const { return steps_; }
  const Model& model() const { return model_; }

 private:
  const std::vector<Video>& dataset_;
  Model model_;
  OptimizerState state_;
  Rng rng_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Inference

/// Bilinear upsampling of an h x w logit grid (flatten() order) by `factor`,
/// sampling at pixel centers, then thresholding at logit 0.
inline Mask upsample_threshold(const Matrix& logits, std::size_t h, std::size_t w,
                               std::size_t factor) {
  if (logits.rows() != h * w || logits.cols() != 1)
    throw DimensionError("logit grid " + logits.shape() + " does not match " + shape_str(h, w));
  Mask m(w * factor, h * factor);
  const auto coord = [factor](std::size_t p, std::size_t n, std::size_t& i0, std::size_t& i1,
                              double& t) {
    double s = (p + 0.5) / static_cast<double>(factor) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(s);
    i1 = std::min(i0 + 1, n - 1);
    t = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < m.height; ++y) {
    std::size_t y0, y1;
    double ty;
    coord(y, h, y0, y1, ty);
    for (std::size_t x = 0; x < m.width; ++x) {
      std::size_t x0, x1;
      double tx;
      coord(x, w, x0, x1, tx);
      const double top = logits(y0 * w + x0, 0) * (1 - tx) + logits(y0 * w + x1, 0) * tx;
      const double bot = logits(y1 * w + x0, 0) * (1 - tx) + logits(y1 * w + x1, 0) * tx;
      m.at(x, y) = (top * (1 - ty) + bot * ty) > 0.0 ? 1 : 0;
    }
  }
  return m;
}

/// Holds the mapping fitted on a video's first frame; each further frame is
/// one encoder pass plus a matrix-vector product.
class VideoSegmenter {
 public:
  VideoSegmenter(const EncoderParams& params, const TrainConfig& cfg)
      : params_(params), cfg_(cfg) {}

  void fit_reference(const Tensor3& image, const Mask& mask) {
    if (mask.width != image.width() || mask.height != image.height())
      throw DimensionError("first-frame mask size differs from frame size");
    const Matrix x = flatten(encode(params_, image));
    solution_ = block_split_fit(x, ridge_targets(mask, params_.total_stride()), cfg_.ridge());
    width_ = image.width();
    height_ = image.height();
    ++fit_count_;
  }

  Matrix logits(const Tensor3& image) const {
    if (fit_count_ == 0) throw ConfigError("segmenter has no reference fit");
    if (image.width() != width_ || image.height() != height_)
      throw DimensionError("frame " + image.shape() + " differs in size from the reference");
    return ridge_predict(flatten(encode(params_, image)), solution_);
  }

  Mask segment(const Tensor3& image) const {
    const std::size_t s = params_.total_stride();
    const Matrix l = logits(image);
    for (double v : l.data())
      if (!std::isfinite(v)) throw NumericError("non-finite logit during inference");
    return upsample_threshold(l, height_ / s, width_ / s, s);
  }

  std::size_t fit_count() const { return fit_count_; }

 private:
  const EncoderParams& params_;
  TrainConfig cfg_;
  RidgeSolution solution_;
  std::size_t width_ = 0, height_ = 0;
  std::size_t fit_count_ = 0;
};

struct InferStats {
  std::size_t fit_count = 0;
  std::vector<double> frame_ms;  ///< wall time of each query frame
};

/// Segments frames[1..] given the mask of frames[0]. Returns T-1 masks.
inline std::vector<Mask> infer_video(const EncoderParams& params, std::span<const Tensor3> frames,
                                     const Mask& first_mask, const TrainConfig& cfg,
                                     InferStats* stats = nullptr) {
  if (frames.size() < 2) throw ConfigError("inference needs at least two frames");
  VideoSegmenter seg(params, cfg);
  seg.fit_reference(frames[0], first_mask);
  std::vector<Mask> out;
  out.reserve(frames.size() - 1);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    out.push_back(seg.segment(frames[t]));
    if (stats)
      stats->frame_ms.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  if (stats) stats->fit_count = seg.fit_count();
  return out;
}

inline std::vector<Mask> infer_video(const EncoderParams& params, const std::vector<Frame>& frames,
                                     const TrainConfig& cfg, InferStats* stats = nullptr) {
  if (frames.empty() || frames.front().mask.empty())
    throw ConfigError("missing first-frame mask");
  std::vector<Tensor3> images;
  images.reserve(frames.size());
  for (const auto& f : frames) images.push_back(f.image);
  return infer_video(params, images, frames.front().mask, cfg, stats);
}

}  // namespace mrseg

#endif  // MRSEG_PIPELINE_HPP
