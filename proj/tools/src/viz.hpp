#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mono3d/box.hpp"
#include "mono3d/tensor.hpp"

namespace mono3d {

// Min-max normalization to 0..255; a flat map comes out all zeros.
std::vector<std::uint8_t> normalize_bytes(const std::vector<double>& v);

// Binary P6 image from an [h, w, 3] tensor with values in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);

// Top-down footprint plot: ground-truth boxes solid, detections dashed with
// their scores. Deterministic text for byte-stable reruns.
struct BevDetection {
  Box3D box;
  double score = 0;
};
std::string bev_svg(const std::vector<Box3D>& gt, const std::vector<BevDetection>& det);

}  // namespace mono3d
