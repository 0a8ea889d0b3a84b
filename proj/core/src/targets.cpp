#include "mono3d/targets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mono3d/check.hpp"

namespace mono3d {

double DepthCodec::encode(double meters, bool* saturated) const {
  if (gain <= 0.0) throw std::invalid_argument(cat("depth codec: non-positive gain ", gain));
  double code = (meters - offset) / gain;
  const bool clipped = code < -1.0 || code > 1.0;
  if (saturated) *saturated = clipped;
  return std::clamp(code, -1.0, 1.0);
}

void LossWeights::validate() const {
  if (center < 0 || corners < 0 || relation < 0)
    throw std::invalid_argument(
        cat("loss weights must be non-negative: ", center, ", ", corners, ", ", relation));
}

void TargetConfig::validate() const {
  if (image_w <= 0 || image_h <= 0 || stride <= 0 || reduce <= 0 || classes <= 0)
    throw std::invalid_argument("target config: non-positive extent");
  if (image_w % stride != 0 || image_h % stride != 0)
    throw std::invalid_argument(
        cat("target config: image ", image_w, "x", image_h, " not divisible by stride ", stride));
  if (feat_w() % reduce != 0 || feat_h() % reduce != 0)
    throw std::invalid_argument(cat("target config: feature grid ", feat_w(), "x", feat_h(),
                                    " not divisible by reduce ", reduce));
  if (static_cast<int>(mean_dims.size()) != classes)
    throw std::invalid_argument(
        cat("target config: ", mean_dims.size(), " mean-dim rows for ", classes, " classes"));
  if (!(min_overlap > 0.0 && min_overlap < 1.0))
    throw std::invalid_argument(cat("target config: min_overlap ", min_overlap, " outside (0,1)"));
}

double gaussian_radius(double w, double h, double min_overlap) {
  if (!(w > 0.0 && h > 0.0))
    throw std::invalid_argument(cat("gaussian_radius: degenerate box ", w, " x ", h));
  if (!(min_overlap > 0.0 && min_overlap < 1.0))
    throw std::invalid_argument(cat("gaussian_radius: overlap ", min_overlap, " outside (0,1)"));
  const double o = min_overlap, s = w + h, p = w * h;
  // Both corners pulled inward: (w-2r)(h-2r) = o*w*h.
  const double r1 = (s - std::sqrt(std::max(0.0, s * s - 4.0 * p * (1.0 - o)))) / 4.0;
  // Whole box displaced diagonally: (w-r)(h-r) = o*(2wh - (w-r)(h-r)).
  const double r2 = (s - std::sqrt(std::max(0.0, s * s - 4.0 * p * (1.0 - o) / (1.0 + o)))) / 2.0;
  // Both corners pushed outward: w*h = o*(w+2r)(h+2r).
  const double r3 =
      (-o * s + std::sqrt(std::max(0.0, o * o * s * s + 4.0 * o * (1.0 - o) * p))) / (4.0 * o);
  return std::max(0.0, std::min({r1, r2, r3}));
}

double gaussian_sigma(double w, double h, double min_overlap) {
  const double r = gaussian_radius(w, h, min_overlap);
  return std::max((2.0 * r + 1.0) / 6.0, 0.5);
}

Tensor splat_heatmap(const std::vector<SplatPoint>& points, int feat_h, int feat_w, int classes) {
  if (feat_h <= 0 || feat_w <= 0 || classes <= 0)
    throw std::invalid_argument("splat_heatmap: non-positive map extent");
  Tensor map(Shape::hwc(feat_h, feat_w, classes));
  for (const auto& pt : points) {
    if (pt.cell_x < 0 || pt.cell_x >= feat_w || pt.cell_y < 0 || pt.cell_y >= feat_h)
      throw std::invalid_argument(cat("splat_heatmap: center (", pt.cell_x, ",", pt.cell_y,
                                      ") outside ", feat_w, "x", feat_h, " grid"));
    if (pt.class_id < 0 || pt.class_id >= classes)
      throw std::invalid_argument(cat("splat_heatmap: class ", pt.class_id, " outside ", classes));
    if (!(pt.sigma > 0.0))
      throw std::invalid_argument(cat("splat_heatmap: non-positive sigma ", pt.sigma));
    const double inv2s2 = 1.0 / (2.0 * pt.sigma * pt.sigma);
    for (int y = 0; y < feat_h; ++y)
      for (int x = 0; x < feat_w; ++x) {
        const double dx = x - pt.cell_x, dy = y - pt.cell_y;
        const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
        double& cell = map.at(y, x, pt.class_id);
        cell = std::max(cell, v);  // overlapping splats keep the stronger peak
      }
  }
  return map;
}

TargetMaps build_targets(const std::vector<TrainObject>& objects, const CameraIntrinsics& k,
                         const TargetConfig& cfg) {
  cfg.validate();
  TargetMaps out;
  out.grid_w = cfg.grid_w();
  out.grid_h = cfg.grid_h();
  std::vector<SplatPoint> points;
  points.reserve(objects.size());
  const int block = cfg.stride * cfg.reduce;
  const int cells = out.grid_w * out.grid_h;

  // Visible-pixel counts per relation-grid cell, then one owner per cell:
  // the object with the most visible pixels there (the nearer object wins
  // ties). Cell masks stay disjoint, like the pixel masks they come from.
  std::vector<std::vector<int>> cell_counts(objects.size());
  for (std::size_t n = 0; n < objects.size(); ++n) {
    const TrainObject& obj = objects[n];
    if (obj.vis_mask.empty()) continue;
    if (static_cast<int>(obj.vis_mask.size()) != cfg.image_w * cfg.image_h)
      throw std::invalid_argument(cat("build_targets: object ", n, " mask holds ",
                                      obj.vis_mask.size(), " pixels for a ", cfg.image_w, "x",
                                      cfg.image_h, " image"));
    cell_counts[n].assign(static_cast<std::size_t>(cells), 0);
    for (int y = 0; y < cfg.image_h; ++y)
      for (int x = 0; x < cfg.image_w; ++x)
        if (obj.vis_mask[static_cast<std::size_t>(y) * cfg.image_w + x])
          ++cell_counts[n][static_cast<std::size_t>(y / block) * out.grid_w + x / block];
  }
  std::vector<int> owner(static_cast<std::size_t>(cells), -1);
  for (int cell = 0; cell < cells; ++cell) {
    int best = -1;
    for (std::size_t n = 0; n < objects.size(); ++n) {
      if (cell_counts[n].empty() || cell_counts[n][static_cast<std::size_t>(cell)] == 0) continue;
      if (best < 0) {
        best = static_cast<int>(n);
        continue;
      }
      const int cn = cell_counts[n][static_cast<std::size_t>(cell)];
      const int cb = cell_counts[static_cast<std::size_t>(best)][static_cast<std::size_t>(cell)];
      if (cn > cb || (cn == cb && objects[n].box.cz < objects[static_cast<std::size_t>(best)].box.cz))
        best = static_cast<int>(n);
    }
    owner[static_cast<std::size_t>(cell)] = best;
  }

  for (std::size_t n = 0; n < objects.size(); ++n) {
    const TrainObject& obj = objects[n];
    if (obj.class_id < 0 || obj.class_id >= cfg.classes)
      throw std::invalid_argument(cat("build_targets: object ", n, " class ", obj.class_id,
                                      " outside ", cfg.classes, " classes"));
    const Pixel px = project_centroid(obj.box, k);
    if (px.u < 0.0 || px.u >= cfg.image_w || px.v < 0.0 || px.v >= cfg.image_h)
      throw std::invalid_argument(cat("build_targets: object ", n, " center (", px.u, ",", px.v,
                                      ") projects outside the ", cfg.image_w, "x", cfg.image_h,
                                      " image"));
    CenterTarget t;
    t.class_id = obj.class_id;
    t.gt = obj.box;
    const double fu = px.u / cfg.stride, fv = px.v / cfg.stride;
    t.cell_x = static_cast<int>(std::floor(fu));
    t.cell_y = static_cast<int>(std::floor(fv));
    t.x_off = fu - t.cell_x;
    t.y_off = fv - t.cell_y;
    bool saturated = false;
    const Vec3 c = obj.box.centroid();
    t.depth_code = cfg.depth.encode(c.z, &saturated);
    if (saturated) ++out.encode_saturations;
    const auto& mean = cfg.mean_dims[static_cast<std::size_t>(obj.class_id)];
    if (!(obj.box.l > 0 && obj.box.w > 0 && obj.box.h > 0))
      throw std::invalid_argument(cat("build_targets: object ", n, " has degenerate dimensions"));
    t.dim_code = {std::log(obj.box.l / mean[0]), std::log(obj.box.w / mean[1]),
                  std::log(obj.box.h / mean[2])};
    const double theta = yaw_to_obs(obj.box.ry, c.x, c.z);
    const AngleCode ac = AngleCode::encode(theta);
    t.sin_t = ac.sin_t;
    t.cos_t = ac.cos_t;
    t.grid_cell = (static_cast<int>(px.v) / block) * out.grid_w + static_cast<int>(px.u) / block;
    if (!obj.vis_mask.empty()) {
      t.interior.assign(static_cast<std::size_t>(cells), 0);
      for (int cell = 0; cell < cells; ++cell)
        if (owner[static_cast<std::size_t>(cell)] == static_cast<int>(n))
          t.interior[static_cast<std::size_t>(cell)] = 1;
    }
    const double bw = std::max(0.0, obj.bbox2d[2] - obj.bbox2d[0]) / cfg.stride;
    const double bh = std::max(0.0, obj.bbox2d[3] - obj.bbox2d[1]) / cfg.stride;
    SplatPoint sp;
    sp.cell_x = t.cell_x;
    sp.cell_y = t.cell_y;
    sp.class_id = t.class_id;
    sp.sigma = (bw > 0.0 && bh > 0.0) ? gaussian_sigma(bw, bh, cfg.min_overlap) : 0.5;
    points.push_back(sp);
    out.centers.push_back(std::move(t));
  }
  out.heatmap = splat_heatmap(points, cfg.feat_h(), cfg.feat_w(), cfg.classes);
  return out;
}

TensorRef center_focal_loss(Tape& tape, const TensorRef& pred, const Tensor& target,
                            double alpha, double beta) {
  if (!pred || pred->shape() != target.shape())
    throw std::invalid_argument(cat("center_focal_loss: prediction ",
                                    pred ? pred->shape().str() : std::string("null"),
                                    " vs target ", target.shape().str()));
  const std::int64_t n = pred->size();
  int peaks = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (target[i] == 1.0) ++peaks;
  const double norm = static_cast<double>(std::max(1, peaks));
  auto out = make_tensor(Shape::vec(1));
  auto tgt = std::make_shared<Tensor>(target);
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = std::clamp((*pred)[i], 1e-6, 1.0 - 1e-6);
    const double y = (*tgt)[i];
    if (y == 1.0)
      loss -= std::pow(1.0 - p, alpha) * std::log(p);
    else
      loss -= std::pow(1.0 - y, beta) * std::pow(p, alpha) * std::log(1.0 - p);
  }
  (*out)[0] = loss / norm;
  tape.record([pred, tgt, out, n, alpha, beta, norm] {
    const double g = out->grad()[0] / norm;
    auto& gp = pred->grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const double p = std::clamp((*pred)[i], 1e-6, 1.0 - 1e-6);
      const double y = (*tgt)[i];
      double d;
      if (y == 1.0) {
        d = alpha * std::pow(1.0 - p, alpha - 1.0) * std::log(p) - std::pow(1.0 - p, alpha) / p;
      } else {
        d = -std::pow(1.0 - y, beta) *
            (alpha * std::pow(p, alpha - 1.0) * std::log(1.0 - p) - std::pow(p, alpha) / (1.0 - p));
      }
      gp[static_cast<std::size_t>(i)] += d * g;
    }
  });
  return out;
}

CornerLossOut corner_loss(Tape& tape, const TensorRef& reg_map, const TargetMaps& targets,
                          const CameraIntrinsics& k, const TargetConfig& cfg) {
  cfg.validate();
  if (!reg_map || reg_map->shape().rank != 3 || reg_map->shape()[2] != 8 ||
      reg_map->shape()[0] != cfg.feat_h() || reg_map->shape()[1] != cfg.feat_w())
    throw std::invalid_argument(cat("corner_loss: regression map ",
                                    reg_map ? reg_map->shape().str() : std::string("null"),
                                    " does not match ", cfg.feat_h(), "x", cfg.feat_w(), "x8"));
  if (!k.valid()) throw std::invalid_argument("corner_loss: bad intrinsics");
  const int count = static_cast<int>(targets.centers.size());
  if (count == 0) throw std::invalid_argument("corner_loss: no annotated centers");

  CornerLossOut result;
  std::vector<int> rows;
  std::vector<double> cells_x, cells_y, mean_l, mean_w, mean_h;
  rows.reserve(static_cast<std::size_t>(count));
  for (const CenterTarget& t : targets.centers) {
    rows.push_back(t.cell_y * cfg.feat_w() + t.cell_x);
    cells_x.push_back(static_cast<double>(t.cell_x));
    cells_y.push_back(static_cast<double>(t.cell_y));
    const auto& mean = cfg.mean_dims[static_cast<std::size_t>(t.class_id)];
    mean_l.push_back(mean[0]);
    mean_w.push_back(mean[1]);
    mean_h.push_back(mean[2]);
  }

  auto flat = reshape(tape, reg_map, Shape::mat(cfg.feat_h() * cfg.feat_w(), 8));
  auto picked = gather_rows(tape, flat, rows);
  auto xo = select_column(tape, picked, 0);
  auto yo = select_column(tape, picked, 1);
  auto dc = select_column(tape, picked, 2);
  auto dl = select_column(tape, picked, 3);
  auto dw = select_column(tape, picked, 4);
  auto dh = select_column(tape, picked, 5);
  auto st = select_column(tape, picked, 6);
  auto ct = select_column(tape, picked, 7);

  // Pixel position of the centroid from cell + offset.
  auto u = mul_const(tape, add_constvec(tape, xo, cells_x), static_cast<double>(cfg.stride));
  auto v = mul_const(tape, add_constvec(tape, yo, cells_y), static_cast<double>(cfg.stride));

  // Depth from the squashed code, floored at the near plane.
  auto z_raw = add_const(tape, mul_const(tape, dc, cfg.depth.gain), cfg.depth.offset);
  for (std::int64_t i = 0; i < z_raw->size(); ++i)
    if ((*z_raw)[i] <= cfg.decode_min_depth) ++result.depth_clamps;
  auto z = clamp_min(tape, z_raw, cfg.decode_min_depth);

  // Back-projection through the pinhole.
  auto x3 = mul_const(tape, mul(tape, add_const(tape, u, -k.px), z), 1.0 / k.fx);
  auto y3 = mul_const(tape, mul(tape, add_const(tape, v, -k.py), z), 1.0 / k.fy);

  // Metric dimensions from log ratios around the class means.
  auto L = mul_constvec(tape, exp(tape, dl), mean_l);
  auto W = mul_constvec(tape, exp(tape, dw), mean_w);
  auto H = mul_constvec(tape, exp(tape, dh), mean_h);

  // Renormalized observation angle.
  auto nrm = sqrt(tape, clamp_min(tape, add(tape, mul(tape, st, st), mul(tape, ct, ct)), 1e-18));
  auto sin_t = div(tape, st, nrm);
  auto cos_t = div(tape, ct, nrm);

  // Yaw = observation angle + ray azimuth, composed through the angle-sum
  // identities so everything stays in (sin, cos) form.
  auto rho = sqrt(tape, clamp_min(tape, add(tape, mul(tape, x3, x3), mul(tape, z, z)), 1e-18));
  auto sin_phi = div(tape, x3, rho);
  auto cos_phi = div(tape, z, rho);
  auto sin_ry = add(tape, mul(tape, sin_t, cos_phi), mul(tape, cos_t, sin_phi));
  auto cos_ry = sub(tape, mul(tape, cos_t, cos_phi), mul(tape, sin_t, sin_phi));

  // Bottom face sits half a height below the centroid (y grows downward).
  auto y_bottom = add(tape, y3, mul_const(tape, H, 0.5));

  // Ground-truth corner coordinates, one target vector per coordinate.
  std::array<std::vector<double>, 24> gt;
  for (auto& gv : gt) gv.resize(static_cast<std::size_t>(count));
  for (int nIdx = 0; nIdx < count; ++nIdx) {
    const auto corners = box_corners(targets.centers[static_cast<std::size_t>(nIdx)].gt);
    for (int ci = 0; ci < 8; ++ci) {
      gt[static_cast<std::size_t>(3 * ci + 0)][static_cast<std::size_t>(nIdx)] = corners[static_cast<std::size_t>(ci)].x;
      gt[static_cast<std::size_t>(3 * ci + 1)][static_cast<std::size_t>(nIdx)] = corners[static_cast<std::size_t>(ci)].y;
      gt[static_cast<std::size_t>(3 * ci + 2)][static_cast<std::size_t>(nIdx)] = corners[static_cast<std::size_t>(ci)].z;
    }
  }

  // Decoded corners in the same order as box_corners().
  const double lx_sign[4] = {+0.5, -0.5, -0.5, +0.5};
  const double lz_sign[4] = {+0.5, +0.5, -0.5, -0.5};
  TensorRef total;
  for (int ci = 0; ci < 8; ++ci) {
    const int base = ci % 4;
    auto lx = mul_const(tape, L, lx_sign[base]);
    auto lz = mul_const(tape, W, lz_sign[base]);
    auto cx = add(tape, x3, add(tape, mul(tape, cos_ry, lx), mul(tape, sin_ry, lz)));
    auto cz = add(tape, z, sub(tape, mul(tape, cos_ry, lz), mul(tape, sin_ry, lx)));
    auto cy = ci < 4 ? y_bottom : sub(tape, y_bottom, H);
    auto ex = smooth_l1_to_const(tape, cx, gt[static_cast<std::size_t>(3 * ci + 0)], cfg.corner_delta);
    auto ey = smooth_l1_to_const(tape, cy, gt[static_cast<std::size_t>(3 * ci + 1)], cfg.corner_delta);
    auto ez = smooth_l1_to_const(tape, cz, gt[static_cast<std::size_t>(3 * ci + 2)], cfg.corner_delta);
    auto e = add(tape, ex, add(tape, ey, ez));
    total = total ? add(tape, total, e) : e;
  }
  result.loss = mul_const(tape, total, 1.0 / (24.0 * count));
  return result;
}

TensorRef relation_mask_loss(Tape& tape, const RelationMap& rel, const TargetMaps& targets,
                             double exponent, bool include_background) {
  if (!rel.g) throw std::invalid_argument("relation_mask_loss: empty relation map");
  if (rel.grid_w != targets.grid_w || rel.grid_h != targets.grid_h)
    throw std::invalid_argument(cat("relation_mask_loss: relation grid ", rel.grid_w, "x",
                                    rel.grid_h, " vs target grid ", targets.grid_w, "x",
                                    targets.grid_h));
  const int d = rel.d();
  struct Row {
    int cell;
    const std::vector<std::uint8_t>* mask;
    int fg, bg;
  };
  std::vector<Row> eligible;
  for (const CenterTarget& t : targets.centers) {
    if (t.interior.empty()) continue;
    int fg = 0;
    for (std::uint8_t m : t.interior) fg += m;
    if (fg == 0) continue;
    if (t.grid_cell < 0 || t.grid_cell >= d)
      throw std::invalid_argument(cat("relation_mask_loss: center cell ", t.grid_cell,
                                      " outside grid of ", d, " cells"));
    eligible.push_back({t.grid_cell, &t.interior, fg, d - fg});
  }
  if (eligible.empty()) return nullptr;

  auto out = make_tensor(Shape::vec(1));
  const auto g_of = [&](int row, int col) {
    return std::clamp(rel.g->at(row, col), 1e-6, 1.0 - 1e-6);
  };
  double loss = 0.0;
  for (const Row& r : eligible) {
    double own = 0.0;
    for (int j = 0; j < d; ++j) {
      const bool fg = (*r.mask)[static_cast<std::size_t>(j)] != 0;
      const double gv = g_of(r.cell, j);
      if (fg)
        own -= std::pow(1.0 - gv, exponent) * std::log(gv) / r.fg;
      else if (include_background && r.bg > 0)
        own -= std::pow(gv, exponent) * std::log(1.0 - gv) / r.bg;
    }
    loss += own;
  }
  (*out)[0] = loss / static_cast<double>(eligible.size());

  auto g = rel.g;
  tape.record([g, out, eligible, d, exponent, include_background] {
    const double gl = out->grad()[0] / static_cast<double>(eligible.size());
    auto& gg = g->grad();
    for (const Row& r : eligible) {
      for (int j = 0; j < d; ++j) {
        const double raw = g->at(r.cell, j);
        const double gv = std::clamp(raw, 1e-6, 1.0 - 1e-6);
        const bool fg = (*r.mask)[static_cast<std::size_t>(j)] != 0;
        double dterm = 0.0;
        if (fg) {
          dterm = (exponent * std::pow(1.0 - gv, exponent - 1.0) * std::log(gv) -
                   std::pow(1.0 - gv, exponent) / gv) /
                  r.fg;
        } else if (include_background && r.bg > 0) {
          dterm = -(exponent * std::pow(gv, exponent - 1.0) * std::log(1.0 - gv) -
                    std::pow(gv, exponent) / (1.0 - gv)) /
                  r.bg;
        }
        gg[static_cast<std::size_t>(r.cell) * d + j] += dterm * gl;
      }
    }
  });
  return out;
}

TensorRef weighted_total(Tape& tape, const TensorRef& lc, const TensorRef& lr, const TensorRef& lm,
                         const LossWeights& weights) {
  weights.validate();
  if (!lc || !lr) throw std::invalid_argument("weighted_total: center/corner terms are required");
  if (!lm && weights.relation != 0.0)
    throw std::invalid_argument("weighted_total: relation weight set but no relation term");
  auto total = add(tape, mul_const(tape, lc, weights.center), mul_const(tape, lr, weights.corners));
  if (lm && weights.relation != 0.0)
    total = add(tape, total, mul_const(tape, lm, weights.relation));
  return total;
}

double corner_distance(const Box3D& a, const Box3D& b, double delta) {
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  const auto huber = [delta](double dv) {
    const double ad = std::abs(dv);
    return ad <= delta ? dv * dv / (2.0 * delta) : ad - 0.5 * delta;
  };
  double s = 0.0;
  for (int i = 0; i < 8; ++i) {
    s += huber(ca[static_cast<std::size_t>(i)].x - cb[static_cast<std::size_t>(i)].x);
    s += huber(ca[static_cast<std::size_t>(i)].y - cb[static_cast<std::size_t>(i)].y);
    s += huber(ca[static_cast<std::size_t>(i)].z - cb[static_cast<std::size_t>(i)].z);
  }
  return s / 24.0;
}

}  // namespace mono3d
