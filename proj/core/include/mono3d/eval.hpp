#pragma once

#include <string>
#include <vector>

#include "mono3d/kitti.hpp"

namespace mono3d {

// Difficulty gates in the KITTI style: a ground-truth box must be tall
// enough on the image and not too occluded or truncated to count; failing
// boxes are not counted but can still absorb detections without penalty.
struct DifficultyFilter {
  std::string name;
  double min_height_px = 25.0;
  int max_occlusion = 2;
  double max_truncation = 0.5;

  static DifficultyFilter easy() { return {"easy", 40.0, 0, 0.15}; }
  static DifficultyFilter moderate() { return {"moderate", 25.0, 1, 0.30}; }
  static DifficultyFilter hard() { return {"hard", 25.0, 2, 0.50}; }
};

enum class Overlap { bev, volume };

struct EvalOptions {
  std::string class_name = "Car";
  // Classes that absorb detections without counting: the usual lookalikes.
  std::vector<std::string> neighbor_classes = {"Van"};
  double iou_threshold = 0.5;
  Overlap overlap = Overlap::volume;
  DifficultyFilter difficulty = DifficultyFilter::moderate();
};

// One operating point of the detector at a score cutoff.
struct PrPoint {
  double score = 0, recall = 0, precision = 0;
  int tp = 0, fp = 0;
};

struct ApResult {
  double ap11 = 0, ap40 = 0;
  int gt_count = 0;
  std::vector<PrPoint> points;  // one per distinct score cutoff, descending
};

// Frame-aligned inputs; dets carry scores.
struct EvalInputs {
  std::vector<std::vector<KittiLabel>> gt;
  std::vector<std::vector<KittiLabel>> det;
};

// Matching at a cutoff: detections at or above the cutoff, in descending
// score order, greedily claim the not-yet-claimed eligible ground-truth box
// with the highest overlap (if it clears the threshold). Detections whose
// best remaining overlap is with an ignored box, or that sit mostly inside a
// DontCare region, are dropped from scoring. The published curve holds one
// point per distinct detection score; interpolated precision is the best
// precision at equal or higher recall.
ApResult evaluate_class(const EvalInputs& inputs, const EvalOptions& opt);

// Counts tp/fp among detections with score >= cutoff. Exposed so the tests
// can probe single operating points directly.
PrPoint match_at_cutoff(const EvalInputs& inputs, const EvalOptions& opt, double cutoff);

struct ReportRow {
  std::string class_name;
  std::string metric;  // ap11_bev / ap40_bev / ap11_3d / ap40_3d
  std::string difficulty;
  double ap = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::string csv() const;    // class,metric,difficulty,ap
  std::string table() const;  // human-readable, difficulty columns
};

// Full sweep: both overlap metrics, both interpolation grids, all three
// difficulty gates, for each requested class.
EvalReport evaluate_all(const EvalInputs& inputs, const std::vector<std::string>& classes,
                        double iou_threshold);

// Self-contained reading of a dataset root plus a detection directory.
EvalInputs load_eval_inputs(const std::filesystem::path& gt_root,
                            const std::filesystem::path& det_dir);

}  // namespace mono3d
