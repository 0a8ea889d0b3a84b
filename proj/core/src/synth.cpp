#include "mono3d/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mono3d/check.hpp"
#include "mono3d/rng.hpp"

namespace mono3d {

namespace {

constexpr double kPi = std::numbers::pi;

struct Pt {
  double x, y;
};

double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain; returns a counter-clockwise hull (y grows down,
// so "counter-clockwise" here means negative signed area in screen space --
// only consistency matters for the point test).
std::vector<Pt> convex_hull(std::vector<Pt> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Pt& a, const Pt& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Pt> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool point_in_hull(const std::vector<Pt>& hull, const Pt& p) {
  const std::size_t n = hull.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (cross(hull[i], hull[(i + 1) % n], p) < 0.0) return false;
  return true;
}

struct Placed {
  Box3D box;
  int class_id;
  Pixel center_px;
  std::vector<Pt> hull;
  std::array<double, 4> bbox_raw;  // unclipped hull bounds
  std::array<double, 3> albedo;
};

}  // namespace

void SceneConfig::validate() const {
  targets.validate();
  if (min_objects < 1 || max_objects < min_objects)
    throw std::invalid_argument(cat("scene config: bad object range [", min_objects, ", ",
                                    max_objects, "]"));
  if (!(min_depth > 0.0 && max_depth > min_depth))
    throw std::invalid_argument(cat("scene config: bad depth range [", min_depth, ", ", max_depth,
                                    "]"));
  if (dims_jitter < 0.0 || dims_jitter > 0.8)
    throw std::invalid_argument(cat("scene config: dims jitter ", dims_jitter, " outside [0, 0.8]"));
  if (min_cell_separation < 0)
    throw std::invalid_argument("scene config: negative cell separation");
}

std::vector<TrainObject> SyntheticScene::train_objects() const {
  std::vector<TrainObject> out;
  out.reserve(objects.size());
  for (const SceneObject& o : objects) out.push_back({o.box, o.class_id, o.bbox2d, o.vis_mask});
  return out;
}

namespace {

// Projects the eight corners and keeps the convex hull; throws placement back
// to the caller when any corner comes too close to the camera plane.
bool project_hull(const Box3D& box, const CameraIntrinsics& k, std::vector<Pt>& hull,
                  std::array<double, 4>& bounds) {
  const auto corners = box_corners(box);
  std::vector<Pt> pts;
  pts.reserve(8);
  for (const Vec3& c : corners) {
    if (c.z < 0.25) return false;
    pts.push_back({k.fx * c.x / c.z + k.px, k.fy * c.y / c.z + k.py});
  }
  bounds = {pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Pt& p : pts) {
    bounds[0] = std::min(bounds[0], p.x);
    bounds[1] = std::min(bounds[1], p.y);
    bounds[2] = std::max(bounds[2], p.x);
    bounds[3] = std::max(bounds[3], p.y);
  }
  hull = convex_hull(std::move(pts));
  return hull.size() >= 3;
}

Box3D sample_box_at(double u, double v, double depth, double yaw,
                    const std::array<double, 3>& dims, const CameraIntrinsics& k) {
  // (u, v) is the projected centroid; lift it, then drop to the bottom face.
  Box3D b;
  b.l = dims[0];
  b.w = dims[1];
  b.h = dims[2];
  b.cx = (u - k.px) / k.fx * depth;
  b.cy = (v - k.py) / k.fy * depth + 0.5 * b.h;
  b.cz = depth;
  b.ry = yaw;
  return b;
}

bool cells_far_enough(const Pixel& a, const Pixel& b, int stride, int min_sep) {
  const int ax = static_cast<int>(a.u) / stride, ay = static_cast<int>(a.v) / stride;
  const int bx = static_cast<int>(b.u) / stride, by = static_cast<int>(b.v) / stride;
  return std::max(std::abs(ax - bx), std::abs(ay - by)) >= min_sep;
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  const int W = cfg.targets.image_w, H = cfg.targets.image_h;
  CameraIntrinsics k;
  k.fx = k.fy = cfg.focal > 0.0 ? cfg.focal : static_cast<double>(W);
  k.px = 0.5 * W;
  k.py = 0.5 * H;

  Rng rng(seed);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const int want = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    std::vector<Placed> placed;
    bool ok = true;

    const auto sample_dims = [&](int cls) {
      const auto& mean = cfg.targets.mean_dims[static_cast<std::size_t>(cls)];
      std::array<double, 3> d;
      for (int i = 0; i < 3; ++i)
        d[static_cast<std::size_t>(i)] =
            mean[static_cast<std::size_t>(i)] * std::exp(rng.uniform(-cfg.dims_jitter, cfg.dims_jitter));
      return d;
    };

    const auto try_place = [&](double u, double v, double depth) -> bool {
      const int cls = cfg.targets.classes == 1 ? 0 : rng.uniform_int(0, cfg.targets.classes - 1);
      const double yaw = rng.uniform(-kPi, kPi);
      Placed p;
      p.class_id = cls;
      p.box = sample_box_at(u, v, depth, wrap_angle(yaw), sample_dims(cls), k);
      p.center_px = {u, v};
      for (const Placed& other : placed)
        if (!cells_far_enough(p.center_px, other.center_px, cfg.targets.stride,
                              cfg.min_cell_separation))
          return false;
      // Centers must land on distinct relation-grid cells as well.
      const int block = cfg.targets.stride * cfg.targets.reduce;
      for (const Placed& other : placed)
        if (static_cast<int>(p.center_px.u) / block == static_cast<int>(other.center_px.u) / block &&
            static_cast<int>(p.center_px.v) / block == static_cast<int>(other.center_px.v) / block)
          return false;
      if (!project_hull(p.box, k, p.hull, p.bbox_raw)) return false;
      for (int c = 0; c < 3; ++c) p.albedo[static_cast<std::size_t>(c)] = rng.uniform(0.25, 1.0);
      placed.push_back(std::move(p));
      return true;
    };

    const auto sample_center = [&] {
      return Pixel{rng.uniform(cfg.center_margin_px, W - cfg.center_margin_px),
                   rng.uniform(cfg.center_margin_px, H - cfg.center_margin_px)};
    };

    if (cfg.force_occlusion) {
      // Front object in the nearer half of the range, then a rear object
      // whose center projects inside the front hull.
      const Pixel front = sample_center();
      const double front_depth = rng.uniform(cfg.min_depth, 0.5 * (cfg.min_depth + cfg.max_depth));
      if (!try_place(front.u, front.v, front_depth)) continue;
      const Placed& f = placed.back();
      bool rear_ok = false;
      for (int r = 0; r < 24 && !rear_ok; ++r) {
        const double rx = rng.uniform(std::max(cfg.center_margin_px, f.bbox_raw[0]),
                                      std::min(W - cfg.center_margin_px, f.bbox_raw[2]));
        const double ry = rng.uniform(std::max(cfg.center_margin_px, f.bbox_raw[1]),
                                      std::min(H - cfg.center_margin_px, f.bbox_raw[3]));
        if (!point_in_hull(f.hull, {rx, ry})) continue;
        const double rear_depth = std::min(cfg.max_depth, front_depth + rng.uniform(3.0, 8.0));
        rear_ok = try_place(rx, ry, rear_depth);
      }
      if (!rear_ok) continue;
    }

    while (static_cast<int>(placed.size()) < want) {
      bool added = false;
      for (int r = 0; r < 32 && !added; ++r) {
        const Pixel c = sample_center();
        added = try_place(c.u, c.v, rng.uniform(cfg.min_depth, cfg.max_depth));
      }
      if (!added) {
        ok = placed.size() >= static_cast<std::size_t>(cfg.min_objects) &&
             (!cfg.force_occlusion || placed.size() >= 2);
        break;
      }
    }
    if (!ok || placed.empty()) continue;

    // Painter's rasterization at pixel centers; the nearest covering object
    // owns each pixel, which is exactly its visibility mask.
    const int n = static_cast<int>(placed.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return placed[static_cast<std::size_t>(a)].box.centroid().z <
             placed[static_cast<std::size_t>(b)].box.centroid().z;
    });

    std::vector<int> owner(static_cast<std::size_t>(W * H), -1);
    std::vector<int> hull_px(static_cast<std::size_t>(n), 0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Pt pc{x + 0.5, y + 0.5};
        for (int oi : order) {
          const Placed& p = placed[static_cast<std::size_t>(oi)];
          if (pc.x < p.bbox_raw[0] || pc.x > p.bbox_raw[2] || pc.y < p.bbox_raw[1] ||
              pc.y > p.bbox_raw[3])
            continue;
          if (point_in_hull(p.hull, pc)) {
            ++hull_px[static_cast<std::size_t>(oi)];
            if (owner[static_cast<std::size_t>(y) * W + x] < 0)
              owner[static_cast<std::size_t>(y) * W + x] = oi;
          }
        }
      }

    SyntheticScene scene;
    scene.seed = seed;
    scene.k = k;
    scene.image = Tensor(Shape::hwc(H, W, 3));
    std::array<double, 3> bg;
    for (int c = 0; c < 3; ++c) bg[static_cast<std::size_t>(c)] = rng.uniform(0.02, 0.15);

    std::vector<int> visible_px(static_cast<std::size_t>(n), 0);
    scene.objects.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      scene.objects[static_cast<std::size_t>(i)].vis_mask.assign(static_cast<std::size_t>(W * H), 0);

    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int oi = owner[static_cast<std::size_t>(y) * W + x];
        for (int c = 0; c < 3; ++c) {
          double v;
          if (oi < 0) {
            v = bg[static_cast<std::size_t>(c)];
          } else {
            const Placed& p = placed[static_cast<std::size_t>(oi)];
            // Farther objects render darker: a direct image cue for depth.
            const double shade =
                1.0 - 0.35 * (p.box.centroid().z - cfg.min_depth) / (cfg.max_depth - cfg.min_depth);
            v = p.albedo[static_cast<std::size_t>(c)] * shade;
          }
          scene.image.at(y, x, c) = v;
        }
        if (oi >= 0) {
          ++visible_px[static_cast<std::size_t>(oi)];
          scene.objects[static_cast<std::size_t>(oi)].vis_mask[static_cast<std::size_t>(y) * W + x] = 1;
        }
      }

    bool all_visible = true;
    for (int i = 0; i < n; ++i) {
      SceneObject& so = scene.objects[static_cast<std::size_t>(i)];
      const Placed& p = placed[static_cast<std::size_t>(i)];
      so.box = p.box;
      so.class_id = p.class_id;
      so.bbox2d = {std::clamp(p.bbox_raw[0], 0.0, static_cast<double>(W)),
                   std::clamp(p.bbox_raw[1], 0.0, static_cast<double>(H)),
                   std::clamp(p.bbox_raw[2], 0.0, static_cast<double>(W)),
                   std::clamp(p.bbox_raw[3], 0.0, static_cast<double>(H))};
      const double full_area = (p.bbox_raw[2] - p.bbox_raw[0]) * (p.bbox_raw[3] - p.bbox_raw[1]);
      const double clip_area =
          (so.bbox2d[2] - so.bbox2d[0]) * (so.bbox2d[3] - so.bbox2d[1]);
      so.truncation = full_area > 0.0 ? std::clamp(1.0 - clip_area / full_area, 0.0, 1.0) : 0.0;
      so.visible_fraction =
          hull_px[static_cast<std::size_t>(i)] > 0
              ? static_cast<double>(visible_px[static_cast<std::size_t>(i)]) / hull_px[static_cast<std::size_t>(i)]
              : 0.0;
      so.occlusion = so.visible_fraction >= 0.9 ? 0 : (so.visible_fraction >= 0.5 ? 1 : 2);
      if (visible_px[static_cast<std::size_t>(i)] == 0) all_visible = false;
      const int cu = static_cast<int>(p.center_px.u), cv = static_cast<int>(p.center_px.v);
      const int ow = owner[static_cast<std::size_t>(cv) * W + cu];
      so.occluded_by = (ow >= 0 && ow != i) ? ow : -1;
      if (so.occluded_by >= 0) scene.has_center_occlusion = true;
    }
    if (!all_visible) continue;
    if (cfg.force_occlusion && !scene.has_center_occlusion) continue;

    scene.targets = build_targets(scene.train_objects(), k, cfg.targets);
    return scene;
  }
  throw std::runtime_error(cat("generate_scene: no valid scene after ", cfg.max_attempts,
                               " attempts for seed ", seed));
}

std::vector<SyntheticScene> generate_dataset(std::uint64_t seed, int count,
                                             const SceneConfig& cfg) {
  if (count <= 0) throw std::invalid_argument(cat("generate_dataset: bad count ", count));
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(generate_scene(derive_seed(seed, static_cast<std::uint64_t>(i)), cfg));
  return out;
}

std::vector<std::pair<int, int>> occluded_pairs(const SyntheticScene& scene) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
    const int front = scene.objects[static_cast<std::size_t>(i)].occluded_by;
    if (front >= 0) out.emplace_back(i, front);
  }
  return out;
}

}  // namespace mono3d
