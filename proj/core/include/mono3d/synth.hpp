#pragma once

#include <cstdint>
#include <vector>

#include "mono3d/box.hpp"
#include "mono3d/targets.hpp"
#include "mono3d/tensor.hpp"

namespace mono3d {

// Procedural box-world scenes: a pinhole camera looking at flat-shaded boxes,
// rendered by depth order so every instance gets an exact visibility mask.
// All sampling comes from the scene's own seeded generator, so a seed fully
// determines the scene down to the last bit.
struct SceneConfig {
  TargetConfig targets;            // image extents, stride, classes, codecs
  int min_objects = 1, max_objects = 4;
  double min_depth = 4.0, max_depth = 24.0;
  double dims_jitter = 0.15;       // uniform log-space size variation
  double focal = 0.0;              // 0 = use image width
  double center_margin_px = 4.0;   // projected centers stay this far inside
  bool force_occlusion = false;    // realize a center-covered pair
  int min_cell_separation = 2;     // Chebyshev distance between center cells
  int max_attempts = 400;

  void validate() const;
};

struct SceneObject {
  Box3D box;
  int class_id = 0;
  std::array<double, 4> bbox2d{};        // projected hull box, clipped
  double truncation = 0.0;
  int occlusion = 0;                     // 0 fully visible / 1 partly / 2 largely hidden
  std::vector<std::uint8_t> vis_mask;    // full-resolution visibility
  double visible_fraction = 1.0;
  int occluded_by = -1;                  // object owning the pixel at this center
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  CameraIntrinsics k;
  Tensor image;  // [h, w, 3]
  std::vector<SceneObject> objects;
  TargetMaps targets;
  bool has_center_occlusion = false;

  std::vector<TrainObject> train_objects() const;
};

SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& cfg);
std::vector<SyntheticScene> generate_dataset(std::uint64_t seed, int count, const SceneConfig& cfg);

// (rear, front) index pairs where the rear object's projected center falls on
// a pixel owned by the front object.
std::vector<std::pair<int, int>> occluded_pairs(const SyntheticScene& scene);

}  // namespace mono3d
