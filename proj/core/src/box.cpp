#include "mono3d/box.hpp"

#include <algorithm>
#include <stdexcept>
#include <numbers>
#include <vector>

#include "mono3d/check.hpp"

namespace mono3d {

namespace {
constexpr double kPi = std::numbers::pi;
}

double wrap_angle(double a) {
  if (!std::isfinite(a)) throw std::invalid_argument("wrap_angle: non-finite angle");
  const double two_pi = 2.0 * kPi;
  a = std::fmod(a, two_pi);
  if (a <= -kPi) a += two_pi;
  if (a > kPi) a -= two_pi;
  return a;
}

double obs_to_yaw(double theta, double cx, double cz) {
  return wrap_angle(theta + std::atan2(cx, cz));
}

double yaw_to_obs(double ry, double cx, double cz) {
  return wrap_angle(ry - std::atan2(cx, cz));
}

double AngleCode::decode() const {
  const double n = std::sqrt(sin_t * sin_t + cos_t * cos_t);
  if (n < 1e-12) return 0.0;
  return wrap_angle(std::atan2(sin_t / n, cos_t / n));
}

std::array<Vec3, 8> box_corners(const Box3D& b) {
  const double c = std::cos(b.ry), s = std::sin(b.ry);
  // Box-local footprint, counter-clockwise from above.
  const double lx[4] = {+0.5 * b.l, -0.5 * b.l, -0.5 * b.l, +0.5 * b.l};
  const double lz[4] = {+0.5 * b.w, +0.5 * b.w, -0.5 * b.w, -0.5 * b.w};
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    // Yaw about the y axis: x' = c*x + s*z, z' = -s*x + c*z.
    const double x = c * lx[i] + s * lz[i];
    const double z = -s * lx[i] + c * lz[i];
    out[static_cast<std::size_t>(i)] = {b.cx + x, b.cy, b.cz + z};
    out[static_cast<std::size_t>(i + 4)] = {b.cx + x, b.cy - b.h, b.cz + z};
  }
  return out;
}

std::array<std::array<double, 2>, 4> bev_corners(const Box3D& b) {
  auto c8 = box_corners(b);
  std::array<std::array<double, 2>, 4> out;
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = {c8[static_cast<std::size_t>(i)].x, c8[static_cast<std::size_t>(i)].z};
  return out;
}

Pixel project_centroid(const Box3D& b, const CameraIntrinsics& k) {
  if (!k.valid()) throw std::invalid_argument("project_centroid: bad intrinsics");
  const Vec3 c = b.centroid();
  if (c.z <= 0.0)
    throw std::domain_error(cat("project_centroid: centroid depth ", c.z, " is not in front of the camera"));
  return {k.fx * c.x / c.z + k.px, k.fy * c.y / c.z + k.py};
}

Vec3 recover_centroid(int cell_x, int cell_y, double x_off, double y_off, double depth,
                      const CameraIntrinsics& k, int stride) {
  if (!k.valid()) throw std::invalid_argument("recover_centroid: bad intrinsics");
  if (depth <= 0.0) throw std::domain_error(cat("recover_centroid: non-positive depth ", depth));
  const double u = (cell_x + x_off) * stride;
  const double v = (cell_y + y_off) * stride;
  return {(u - k.px) / k.fx * depth, (v - k.py) / k.fy * depth, depth};
}

namespace {

struct P2 {
  double x, z;
};

double edge_side(const P2& a, const P2& b, const P2& p) {
  return (b.x - a.x) * (p.z - a.z) - (b.z - a.z) * (p.x - a.x);
}

// Clips `poly` against the half-plane on the left of a->b (counter-clockwise
// interior). Standard Sutherland-Hodgman step; boundary points are kept.
std::vector<P2> clip_half(const std::vector<P2>& poly, const P2& a, const P2& b) {
  std::vector<P2> out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const P2& cur = poly[i];
    const P2& nxt = poly[(i + 1) % n];
    const double sc = edge_side(a, b, cur);
    const double sn = edge_side(a, b, nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.z + t * (nxt.z - cur.z)});
    }
  }
  return out;
}

double polygon_area(const std::vector<P2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const P2& p = poly[i];
    const P2& q = poly[(i + 1) % n];
    s += p.x * q.z - q.x * p.z;
  }
  return 0.5 * std::abs(s);
}

void require_footprint(const Box3D& b, const char* op) {
  if (!(b.l > 0.0 && b.w > 0.0))
    throw std::invalid_argument(cat(op, ": degenerate footprint ", b.l, " x ", b.w));
}

}  // namespace

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  require_footprint(a, "bev_intersection_area");
  require_footprint(b, "bev_intersection_area");
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  std::vector<P2> poly = {{ca[0][0], ca[0][1]}, {ca[1][0], ca[1][1]}, {ca[2][0], ca[2][1]}, {ca[3][0], ca[3][1]}};
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    const P2 e0{cb[static_cast<std::size_t>(i)][0], cb[static_cast<std::size_t>(i)][1]};
    const P2 e1{cb[static_cast<std::size_t>((i + 1) % 4)][0], cb[static_cast<std::size_t>((i + 1) % 4)][1]};
    poly = clip_half(poly, e0, e1);
  }
  return polygon_area(poly);
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  const double uni = a.l * a.w + b.l * b.w - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  if (!(a.h > 0.0 && b.h > 0.0))
    throw std::invalid_argument(cat("iou_3d: degenerate height ", a.h, " / ", b.h));
  const double inter_bev = bev_intersection_area(a, b);
  // y grows downward: the bottom face is at cy, the top face at cy - h.
  const double y_overlap = std::min(a.cy, b.cy) - std::max(a.cy - a.h, b.cy - b.h);
  if (y_overlap <= 0.0) return 0.0;
  const double inter = inter_bev * y_overlap;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace mono3d
