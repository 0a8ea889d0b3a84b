#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mono3d/attention.hpp"
#include "mono3d/optimizer.hpp"
#include "mono3d/synth.hpp"
#include "mono3d/targets.hpp"

namespace mono3d {

// x:[h,w,ci], w:[3,3,ci,co], b:[co], zero padding 1 -> [ceil(h/s), ceil(w/s), co]
TensorRef conv3x3(Tape& tape, const TensorRef& x, const TensorRef& w, const TensorRef& b,
                  int stride);

// Small stride-4 anchor-free detector: four 3x3 conv stages (strides
// 1,2,1,2), an optional relation stage on the final feature map, a shared
// 1x1 neck, then a per-class center heatmap and an 8-channel box regression
// (x/y offset, squashed depth code, three log size ratios, sin/cos of the
// observation angle).
struct DetectorConfig {
  TargetConfig targets;
  std::array<int, 4> stage_channels{16, 32, 64, 64};
  int head_channels = 256;
  AttentionConfig attention;
  bool use_attention = true;
  double score_threshold = 0.25;
  int top_k = 100;
  double heatmap_bias = -2.19;  // initial peak probability ~0.1

  void validate() const;
};

struct HeadOutputs {
  TensorRef heatmap;  // [feat_h, feat_w, classes], post-sigmoid
  TensorRef reg;      // [feat_h, feat_w, 8], depth channel squashed
  std::optional<RelationMap> relation;
};

void init_detector_params(ParamRegistry& params, const DetectorConfig& cfg, Rng& rng);

HeadOutputs detector_forward(Tape& tape, const Tensor& image, const ParamRegistry& params,
                             const DetectorConfig& cfg);

struct Detection {
  Box3D box;
  int class_id = 0;
  double score = 0.0;
};

// Strict 3x3 local-maximum peaks (ties go to the lowest flat index) above
// the score threshold, capped at top_k by descending score.
std::vector<Detection> decode_detections(const Tensor& heatmap, const Tensor& reg,
                                         const CameraIntrinsics& k, const DetectorConfig& cfg);
std::vector<Detection> decode_detections(const HeadOutputs& heads, const CameraIntrinsics& k,
                                         const DetectorConfig& cfg);

struct SceneLoss {
  TensorRef total, center, corners;
  TensorRef relation;  // null when unsupervised or no eligible mask
  int depth_clamps = 0;
};
SceneLoss detector_loss(Tape& tape, const SyntheticScene& scene, const ParamRegistry& params,
                        const DetectorConfig& cfg, const LossWeights& weights,
                        bool mask_background = false);

struct TrainConfig {
  int steps = 2000;
  AdamConfig adam;
  LossWeights weights;
  std::uint64_t seed = 1;
  double drop1 = 0.5, drop2 = 0.75;  // lr decays by 10x at these fractions
  bool mask_background = false;
  int log_every = 1;
};

struct TrainLogRow {
  int step = 0;
  double center = 0, corners = 0, relation = 0, total = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> curve;
  double first_total = 0, last_total = 0;
  int depth_clamps = 0;
  int steps_without_mask = 0;
};

// Round-robin single-scene steps. Throws DivergenceError on a non-finite
// loss; gradients are consumed by Adam each step.
TrainResult train_detector(ParamRegistry& params, const DetectorConfig& cfg,
                           const std::vector<SyntheticScene>& scenes, const TrainConfig& tc);

// Mean over ground-truth objects of the best same-class volumetric IoU among
// decoded detections (0 when nothing matches).
double mean_matched_iou3d(const ParamRegistry& params, const DetectorConfig& cfg,
                          const std::vector<SyntheticScene>& scenes);

}  // namespace mono3d
