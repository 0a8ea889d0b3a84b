#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mono3d/box.hpp"
#include "mono3d/synth.hpp"
#include "mono3d/targets.hpp"

namespace mono3d {

// One row of a KITTI-style label file: 15 whitespace-separated fields, plus
// an optional 16th score column for detection results. Location is the
// bottom-face center in camera coordinates; sizes are stored (h, w, l).
struct KittiLabel {
  std::string type = "Car";
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom
  double h = 0, w = 0, l = 0;
  double x = 0, y = 0, z = 0;
  double ry = 0;
  std::optional<double> score;

  bool is_dontcare() const { return type == "DontCare"; }
  Box3D to_box() const { return {x, y, z, l, w, h, ry}; }
  static KittiLabel from_box(const Box3D& b, const std::string& type_name);
};

// Parsing throws ParseError carrying the 1-based line number; blank lines are
// skipped. Writing renders all numerics with two decimals, one object per
// line, newline-terminated.
std::vector<KittiLabel> parse_labels(const std::string& text);
std::string format_labels(const std::vector<KittiLabel>& labels);

// Calibration files carry a "P2:" row with the 3x4 projection; only fx, fy,
// cx, cy are meaningful here.
CameraIntrinsics parse_calib(const std::string& text);
std::string format_calib(const CameraIntrinsics& k);

// Binary 8-bit PGM ("P5"); masks store 0 or 255 on disk, 0/1 in memory.
void write_pgm(const std::filesystem::path& path, int w, int h,
               const std::vector<std::uint8_t>& mask01);
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int* w, int* h);
// Grayscale variant for rendering real-valued maps.
void write_pgm_gray(const std::filesystem::path& path, int w, int h,
                    const std::vector<std::uint8_t>& gray);

// Dataset layout under a root directory:
//   label_2/{frame}.txt   calib/{frame}.txt   masks/{frame}/index.json + *.pgm
// index.json maps label rows to mask files; rows without a mask hold null.
std::string frame_name(int frame);  // zero-padded six digits

struct Frame {
  std::vector<KittiLabel> labels;
  CameraIntrinsics k;
  // Aligned with labels; empty vector when the row has no mask.
  std::vector<std::vector<std::uint8_t>> masks;
  int image_w = 0, image_h = 0;
};

void write_frame(const std::filesystem::path& root, int frame, const SyntheticScene& scene,
                 const std::vector<std::string>& class_names);
Frame read_frame(const std::filesystem::path& root, int frame, bool with_masks = true);
std::vector<int> list_frames(const std::filesystem::path& root);

// Detection results: {dir}/{frame}.txt rows with the score column.
void write_detections(const std::filesystem::path& dir, int frame,
                      const std::vector<KittiLabel>& dets);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mono3d
