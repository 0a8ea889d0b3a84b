#pragma once

#include <array>
#include <cmath>
#include <string>

namespace mono3d {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Oriented 3D box in camera coordinates: x right, y down, z forward.
// (cx, cy, cz) is the center of the bottom face; l extends along the box's
// own x axis, w along its z axis, h upward (negative y). ry is the yaw about
// the camera y axis, kept in (-pi, pi].
struct Box3D {
  double cx = 0, cy = 0, cz = 0;
  double l = 0, w = 0, h = 0;
  double ry = 0;

  Vec3 centroid() const { return {cx, cy - 0.5 * h, cz}; }
  double volume() const { return l * w * h; }
  bool valid() const { return l > 0 && w > 0 && h > 0 && std::isfinite(cx + cy + cz + ry); }
};

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double px = 0, py = 0;

  bool valid() const { return fx > 0 && fy > 0; }
};

// Wraps any finite angle into (-pi, pi].
double wrap_angle(double a);

// Observation angle (what a cropped view can see) vs. global yaw: the global
// yaw equals the observation angle plus the azimuth of the ray to the object.
double obs_to_yaw(double theta, double cx, double cz);
double yaw_to_obs(double ry, double cx, double cz);

// Unit (sin, cos) encoding of an observation angle; decode renormalizes so a
// regressed, non-unit pair still yields a well-defined angle.
struct AngleCode {
  double sin_t = 0, cos_t = 1;
  static AngleCode encode(double theta) { return {std::sin(theta), std::cos(theta)}; }
  double decode() const;
};

// Corner order: bottom face counter-clockwise when seen from above, starting
// at (+l/2, +w/2) in box-local coordinates, then the top face in the same
// order. Index i+4 sits directly above index i.
std::array<Vec3, 8> box_corners(const Box3D& b);

// Footprint on the ground plane, (x, z) per corner, same winding as above.
std::array<std::array<double, 2>, 4> bev_corners(const Box3D& b);

// Pixel position of the volumetric centroid. Throws std::domain_error when
// the centroid is at or behind the camera plane.
struct Pixel {
  double u = 0, v = 0;
};
Pixel project_centroid(const Box3D& b, const CameraIntrinsics& k);

// Inverse of project_centroid for a feature-grid detection: cell indices at
// `stride` plus fractional offsets recover the pixel, depth lifts it to 3D.
Vec3 recover_centroid(int cell_x, int cell_y, double x_off, double y_off, double depth,
                      const CameraIntrinsics& k, int stride);

// Intersection-over-union of the ground-plane footprints (rotated rectangles)
// and of the full volumes (footprint overlap times vertical overlap).
double iou_bev(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

// Area of the convex overlap of two footprints; exposed for the evaluator's
// ignored-region test and for the geometry oracle tests.
double bev_intersection_area(const Box3D& a, const Box3D& b);

}  // namespace mono3d
