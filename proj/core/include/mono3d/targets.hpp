#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mono3d/attention.hpp"
#include "mono3d/box.hpp"
#include "mono3d/ops.hpp"
#include "mono3d/tensor.hpp"

namespace mono3d {

// Depth head coding: the network emits a squashed value x in [-1, 1] and the
// metric depth is offset + gain * x. encode() saturates out-of-range depths
// and reports it through the flag.
struct DepthCodec {
  double offset = 12.5;
  double gain = 12.5;

  double decode(double code) const { return offset + gain * code; }
  double encode(double meters, bool* saturated = nullptr) const;
  double min_depth() const { return offset - gain; }
  double max_depth() const { return offset + gain; }
};

struct LossWeights {
  double center = 1.0;
  double corners = 1.0;
  double relation = 1.0;
  void validate() const;
};

// One annotated instance as the target builder consumes it. bbox2d is
// (left, top, right, bottom) in pixels; vis_mask is a full-resolution 0/1
// visibility map (may be empty when no mask annotation exists).
struct TrainObject {
  Box3D box;
  int class_id = 0;
  std::array<double, 4> bbox2d{};
  std::vector<std::uint8_t> vis_mask;
};

struct TargetConfig {
  int image_w = 64, image_h = 64;
  int stride = 4;
  int reduce = 2;  // relation grid = feature grid / reduce
  int classes = 1;
  double min_overlap = 0.7;
  DepthCodec depth;
  std::vector<std::array<double, 3>> mean_dims = {{3.9, 1.6, 1.56}};  // per class (l, w, h)
  double corner_delta = 1.0;
  double decode_min_depth = 0.1;

  int feat_w() const { return image_w / stride; }
  int feat_h() const { return image_h / stride; }
  int grid_w() const { return feat_w() / reduce; }
  int grid_h() const { return feat_h() / reduce; }
  void validate() const;
};

// Everything the losses need about one annotated center.
struct CenterTarget {
  int cell_x = 0, cell_y = 0;  // feature-grid cell
  int class_id = 0;
  double x_off = 0, y_off = 0;  // sub-cell remainder in [0, 1)
  double depth_code = 0;
  std::array<double, 3> dim_code{};  // log size ratios (l, w, h)
  double sin_t = 0, cos_t = 1;       // observation angle
  Box3D gt;
  int grid_cell = -1;                       // flattened relation-grid cell
  std::vector<std::uint8_t> interior;  // cells this object owns (disjoint across objects)
};

struct TargetMaps {
  Tensor heatmap;  // [feat_h, feat_w, classes]
  std::vector<CenterTarget> centers;
  int grid_w = 0, grid_h = 0;
  int encode_saturations = 0;  // depths outside the codec range
};

// Size-adaptive splat footprint. gaussian_radius solves the three
// worst-case corner displacement problems (both corners pulled in, the whole
// box shifted, both corners pushed out) and keeps the tightest; the splat
// sigma is (2r+1)/6, floored at 0.5.
double gaussian_radius(double w, double h, double min_overlap);
double gaussian_sigma(double w, double h, double min_overlap);

// Max-combines one unit-peak Gaussian per center into [feat_h, feat_w,
// classes]; the center cell itself holds exactly 1.
struct SplatPoint {
  int cell_x = 0, cell_y = 0, class_id = 0;
  double sigma = 0.5;
};
Tensor splat_heatmap(const std::vector<SplatPoint>& points, int feat_h, int feat_w, int classes);

// Projects annotated boxes to all supervision targets. Throws when a
// projected center leaves the image or the class id has no mean dims.
TargetMaps build_targets(const std::vector<TrainObject>& objects, const CameraIntrinsics& k,
                         const TargetConfig& cfg);

// Penalty-reduced focal loss on the post-sigmoid heatmap against the splat
// targets; normalized by the number of annotated centers (at least 1).
TensorRef center_focal_loss(Tape& tape, const TensorRef& pred, const Tensor& target,
                            double alpha = 2.0, double beta = 4.0);

// Smooth-L1 between decoded and ground-truth box corners, averaged over all
// 24 coordinates of every annotated object. The decode path (offsets ->
// pixel, code -> depth, ray back-projection, size ratios, angle
// renormalization, yaw composition, corner frame) runs on the tape so the
// gradient reaches the raw regression map. depth_clamps counts decodes that
// hit the near-plane floor.
struct CornerLossOut {
  TensorRef loss;
  int depth_clamps = 0;
};
CornerLossOut corner_loss(Tape& tape, const TensorRef& reg_map, const TargetMaps& targets,
                          const CameraIntrinsics& k, const TargetConfig& cfg);

// Focal penalty pulling each annotated center's relation row onto its
// instance interior. Foreground cells only by default; include_background
// adds the symmetric push-away term. Objects with an empty interior mask are
// skipped. Returns nullptr when nothing is eligible.
TensorRef relation_mask_loss(Tape& tape, const RelationMap& rel, const TargetMaps& targets,
                             double exponent = 2.0, bool include_background = false);

// weights.center * lc + weights.corners * lr + weights.relation * lm.
// lm may be null iff its weight is zero.
TensorRef weighted_total(Tape& tape, const TensorRef& lc, const TensorRef& lr, const TensorRef& lm,
                         const LossWeights& weights);

// Plain (non-tape) corner distance: mean smooth-L1 over the 24 coordinates.
double corner_distance(const Box3D& a, const Box3D& b, double delta);

}  // namespace mono3d
