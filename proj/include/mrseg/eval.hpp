#ifndef MRSEG_EVAL_HPP
#define MRSEG_EVAL_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrseg/errors.hpp"
#include "mrseg/pipeline.hpp"
#include "mrseg/synthvid.hpp"

namespace mrseg {

/// |pred & gt| / |pred | gt|; 1.0 when both are empty.
inline double iou(const Mask& pred, const Mask& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw DimensionError("iou shape mismatch: " + shape_str(pred.height, pred.width) + " vs " +
                         shape_str(gt.height, gt.width));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    inter += pred.bits[i] & gt.bits[i];
    uni += pred.bits[i] | gt.bits[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct FrameScore {
  std::string video;
  std::size_t frame = 0;
  double iou = 0.0;
};

struct VideoScore {
  std::string video;
  double j = 0.0;  ///< mean IoU over frames 1..T-1
};

struct EvalReport {
  std::vector<VideoScore> per_video;  ///< ordered by video id
  std::vector<FrameScore> per_frame;
  double j_mean = 0.0;

  /// Highest J first; ties broken by id.
  std::vector<VideoScore> sorted_by_j() const {
    auto v = per_video;
    std::stable_sort(v.begin(), v.end(), [](const VideoScore& a, const VideoScore& b) {
      return a.j != b.j ? a.j > b.j : a.video < b.video;
    });
    return v;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["j_mean"] = j_mean;
    j["per_video"] = nlohmann::ordered_json::object();
    for (const auto& v : per_video) j["per_video"][v.video] = v.j;
    j["per_frame"] = nlohmann::ordered_json::array();
    for (const auto& f : per_frame)
      j["per_frame"].push_back({{"video", f.video}, {"frame", f.frame}, {"iou", f.iou}});
    return j;
  }
};

/// Scores predictions for frames 1..T-1 of every video; predictions[v][t-1]
/// is the mask predicted for frame t. Frame 0 is the given annotation and is
/// never scored.
inline EvalReport evaluate_predictions(const std::vector<Video>& dataset,
                                       const std::vector<std::vector<Mask>>& predictions) {
  if (predictions.size() != dataset.size())
    throw DimensionError("prediction count differs from video count");
  if (dataset.empty()) throw ConfigError("cannot evaluate an empty dataset");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return dataset[a].id < dataset[b].id; });
  EvalReport rep;
  double total = 0.0;
  for (std::size_t v : order) {
    const Video& video = dataset[v];
    if (video.frames.size() < 2) throw ConfigError(video.id + " has fewer than two frames");
    if (predictions[v].size() != video.frames.size() - 1)
      throw DimensionError(video.id + ": expected " + std::to_string(video.frames.size() - 1) +
                           " predicted masks, got " + std::to_string(predictions[v].size()));
    double sum = 0.0;
    for (std::size_t t = 1; t < video.frames.size(); ++t) {
      const double s = iou(predictions[v][t - 1], video.frames[t].mask);
      rep.per_frame.push_back({video.id, t, s});
      sum += s;
    }
    const double j = sum / static_cast<double>(video.frames.size() - 1);
    rep.per_video.push_back({video.id, j});
    total += j;
  }
  rep.j_mean = total / static_cast<double>(dataset.size());
  return rep;
}

inline EvalReport evaluate(const EncoderParams& params, const std::vector<Video>& dataset,
                           const TrainConfig& cfg) {
  std::vector<std::vector<Mask>> preds;
  preds.reserve(dataset.size());
  for (const auto& v : dataset) {
    if (v.frames.empty() || v.frames.front().mask.empty())
      throw ConfigError(v.id + ": missing first-frame mask");
    preds.push_back(infer_video(params, v.frames, cfg));
  }
  return evaluate_predictions(dataset, preds);
}

}  // namespace mrseg

#endif  // MRSEG_EVAL_HPP
