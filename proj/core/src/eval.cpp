#include "mono3d/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "mono3d/check.hpp"
#include "mono3d/parallel.hpp"

namespace mono3d {

namespace {

enum class GtKind { relevant, ignored, dontcare, unrelated };

GtKind classify_gt(const KittiLabel& gt, const EvalOptions& opt) {
  if (gt.is_dontcare()) return GtKind::dontcare;
  if (gt.type == opt.class_name) {
    const double height = gt.bbox[3] - gt.bbox[1];
    const bool pass = height >= opt.difficulty.min_height_px &&
                      gt.occlusion <= opt.difficulty.max_occlusion &&
                      gt.truncation <= opt.difficulty.max_truncation;
    return pass ? GtKind::relevant : GtKind::ignored;
  }
  for (const std::string& n : opt.neighbor_classes)
    if (gt.type == n) return GtKind::ignored;
  return GtKind::unrelated;
}

double box_overlap(const KittiLabel& det, const KittiLabel& gt, Overlap metric) {
  return metric == Overlap::bev ? iou_bev(det.to_box(), gt.to_box())
                                : iou_3d(det.to_box(), gt.to_box());
}

double dontcare_cover(const KittiLabel& det, const KittiLabel& dc) {
  const double w = std::min(det.bbox[2], dc.bbox[2]) - std::max(det.bbox[0], dc.bbox[0]);
  const double h = std::min(det.bbox[3], dc.bbox[3]) - std::max(det.bbox[1], dc.bbox[1]);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double det_area = (det.bbox[2] - det.bbox[0]) * (det.bbox[3] - det.bbox[1]);
  if (det_area <= 0.0) return 0.0;
  return w * h / det_area;
}

}  // namespace

PrPoint match_at_cutoff(const EvalInputs& inputs, const EvalOptions& opt, double cutoff) {
  if (inputs.gt.size() != inputs.det.size())
    throw std::invalid_argument(cat("evaluate: ", inputs.gt.size(), " ground-truth frames vs ",
                                    inputs.det.size(), " detection frames"));
  PrPoint pt;
  pt.score = cutoff;
  int n_gt = 0;
  for (std::size_t f = 0; f < inputs.gt.size(); ++f) {
    const auto& gts = inputs.gt[f];
    std::vector<GtKind> kind(gts.size());
    for (std::size_t g = 0; g < gts.size(); ++g) {
      kind[g] = classify_gt(gts[g], opt);
      if (kind[g] == GtKind::relevant) ++n_gt;
    }

    // Detections of the class at or above the cutoff, strongest first;
    // equal scores keep file order.
    std::vector<int> order;
    for (std::size_t d = 0; d < inputs.det[f].size(); ++d) {
      const KittiLabel& det = inputs.det[f][d];
      if (det.type != opt.class_name) continue;
      if (!det.score)
        throw std::invalid_argument(cat("evaluate: detection without score in frame ", f));
      if (*det.score >= cutoff) order.push_back(static_cast<int>(d));
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return *inputs.det[f][static_cast<std::size_t>(a)].score >
             *inputs.det[f][static_cast<std::size_t>(b)].score;
    });

    std::vector<char> claimed(gts.size(), 0);
    for (int di : order) {
      const KittiLabel& det = inputs.det[f][static_cast<std::size_t>(di)];
      double best_rel = 0.0, best_ign = 0.0;
      int best_rel_idx = -1, best_ign_idx = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (claimed[g]) continue;
        if (kind[g] != GtKind::relevant && kind[g] != GtKind::ignored) continue;
        const double ov = box_overlap(det, gts[g], opt.overlap);
        if (kind[g] == GtKind::relevant && ov > best_rel) {
          best_rel = ov;
          best_rel_idx = static_cast<int>(g);
        } else if (kind[g] == GtKind::ignored && ov > best_ign) {
          best_ign = ov;
          best_ign_idx = static_cast<int>(g);
        }
      }
      if (best_rel_idx >= 0 && best_rel >= opt.iou_threshold) {
        claimed[static_cast<std::size_t>(best_rel_idx)] = 1;
        ++pt.tp;
        continue;
      }
      if (best_ign_idx >= 0 && best_ign >= opt.iou_threshold) {
        claimed[static_cast<std::size_t>(best_ign_idx)] = 1;
        continue;  // absorbed, not penalized
      }
      bool in_dontcare = false;
      for (std::size_t g = 0; g < gts.size() && !in_dontcare; ++g)
        if (kind[g] == GtKind::dontcare && dontcare_cover(det, gts[g]) > 0.5) in_dontcare = true;
      if (!in_dontcare) ++pt.fp;
    }
  }
  pt.recall = n_gt > 0 ? static_cast<double>(pt.tp) / n_gt : 0.0;
  pt.precision = (pt.tp + pt.fp) > 0 ? static_cast<double>(pt.tp) / (pt.tp + pt.fp) : 0.0;
  return pt;
}

namespace {

double interpolated_ap(const std::vector<PrPoint>& points, int samples, bool include_zero) {
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double r = include_zero ? static_cast<double>(s) / (samples - 1)
                                  : static_cast<double>(s + 1) / samples;
    double best = 0.0;
    for (const PrPoint& p : points)
      if (p.recall >= r) best = std::max(best, p.precision);
    total += best;
  }
  return total / samples;
}

}  // namespace

ApResult evaluate_class(const EvalInputs& inputs, const EvalOptions& opt) {
  ApResult res;
  for (const auto& frame : inputs.gt)
    for (const KittiLabel& gt : frame)
      if (classify_gt(gt, opt) == GtKind::relevant) ++res.gt_count;

  std::set<double, std::greater<double>> cutoffs;
  for (const auto& frame : inputs.det)
    for (const KittiLabel& det : frame)
      if (det.type == opt.class_name && det.score) cutoffs.insert(*det.score);

  std::vector<double> cuts(cutoffs.begin(), cutoffs.end());
  res.points.resize(cuts.size());
  parallel_for(static_cast<std::int64_t>(cuts.size()), [&](std::int64_t i) {
    res.points[static_cast<std::size_t>(i)] =
        match_at_cutoff(inputs, opt, cuts[static_cast<std::size_t>(i)]);
  });

  if (res.gt_count > 0) {
    res.ap11 = interpolated_ap(res.points, 11, true);
    res.ap40 = interpolated_ap(res.points, 40, false);
  }
  return res;
}

std::string EvalReport::csv() const {
  std::string out = "class,metric,difficulty,ap\n";
  char buf[160];
  for (const ReportRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6f\n", r.class_name.c_str(), r.metric.c_str(),
                  r.difficulty.c_str(), r.ap);
    out += buf;
  }
  return out;
}

std::string EvalReport::table() const {
  // Columns in the customary reporting order: moderate first.
  const char* difficulties[3] = {"moderate", "easy", "hard"};
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %-10s %10s %10s %10s\n", "class", "metric", "moderate",
                "easy", "hard");
  os << buf;
  std::set<std::pair<std::string, std::string>> seen;
  for (const ReportRow& r : rows) {
    if (!seen.insert({r.class_name, r.metric}).second) continue;
    double v[3] = {0, 0, 0};
    for (int d = 0; d < 3; ++d)
      for (const ReportRow& q : rows)
        if (q.class_name == r.class_name && q.metric == r.metric &&
            q.difficulty == difficulties[d])
          v[d] = q.ap;
    std::snprintf(buf, sizeof(buf), "%-8s %-10s %10.2f %10.2f %10.2f\n", r.class_name.c_str(),
                  r.metric.c_str(), 100.0 * v[0], 100.0 * v[1], 100.0 * v[2]);
    os << buf;
  }
  return os.str();
}

EvalReport evaluate_all(const EvalInputs& inputs, const std::vector<std::string>& classes,
                        double iou_threshold) {
  EvalReport report;
  for (const std::string& cls : classes) {
    for (Overlap ov : {Overlap::bev, Overlap::volume}) {
      for (const DifficultyFilter& diff :
           {DifficultyFilter::moderate(), DifficultyFilter::easy(), DifficultyFilter::hard()}) {
        EvalOptions opt;
        opt.class_name = cls;
        opt.iou_threshold = iou_threshold;
        opt.overlap = ov;
        opt.difficulty = diff;
        const ApResult ap = evaluate_class(inputs, opt);
        const std::string tag = ov == Overlap::bev ? "bev" : "3d";
        report.rows.push_back({cls, "ap11_" + tag, diff.name, ap.ap11});
        report.rows.push_back({cls, "ap40_" + tag, diff.name, ap.ap40});
      }
    }
  }
  return report;
}

EvalInputs load_eval_inputs(const std::filesystem::path& gt_root,
                            const std::filesystem::path& det_dir) {
  EvalInputs inputs;
  for (int frame : list_frames(gt_root)) {
    inputs.gt.push_back(parse_labels(read_text_file(gt_root / "label_2" / (frame_name(frame) + ".txt"))));
    const auto det_path = det_dir / (frame_name(frame) + ".txt");
    if (!std::filesystem::exists(det_path))
      throw std::runtime_error(cat("evaluate: missing detection file '", det_path.string(), "'"));
    inputs.det.push_back(parse_labels(read_text_file(det_path)));
  }
  if (inputs.gt.empty()) throw std::runtime_error("evaluate: dataset holds no frames");
  return inputs;
}

}  // namespace mono3d
