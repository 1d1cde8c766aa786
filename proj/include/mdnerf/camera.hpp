#pragma once

#include <cmath>
#include <optional>

#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"

namespace mdnerf {

// World-from-camera rigid transform plus pinhole intrinsics and the
// captured image. The unit of dataset ingestion.
struct CameraView {
  Mat3 intrinsics = Mat3::Identity();   // K, pixels
  Mat3 rotation = Mat3::Identity();     // R, world-from-camera
  Vec3 translation = Vec3::Zero();      // t = camera center in world
  ImageRgb image;                       // H x W x 3 in [0,1]
  std::optional<DepthMap> gt_depth;     // absolute, world units
  int view_id = 0;

  int height() const { return image.height(); }
  int width() const { return image.width(); }

  void check() const {
    if (!is_rotation(rotation))
      throw GeometryError("CameraView: rotation not orthonormal");
    if (intrinsics(0, 0) <= 0 || intrinsics(1, 1) <= 0 ||
        intrinsics(1, 0) != 0 || intrinsics(2, 0) != 0 ||
        intrinsics(2, 1) != 0)
      throw GeometryError("CameraView: K not upper-triangular with positive focals");
    if (gt_depth &&
        (gt_depth->height() != image.height() || gt_depth->width() != image.width()))
      throw GeometryError("CameraView: depth/image dimension mismatch");
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
  double t_near = 0.0;
  double t_far = 0.0;
};

// R_{i->l}, t_{i->l}: camera-i coordinates to camera-l coordinates.
struct RelativePose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RelativePose between(const CameraView& source, const CameraView& target) {
    RelativePose rel;
    rel.rotation = target.rotation.transpose() * source.rotation;
    rel.translation =
        target.rotation.transpose() * (source.translation - target.translation);
    return rel;
  }
  RelativePose compose_after(const RelativePose& first) const {
    // (*this) o first
    RelativePose out;
    out.rotation = rotation * first.rotation;
    out.translation = rotation * first.translation + translation;
    return out;
  }
};

// Cosine between a pixel's viewing ray and the optical axis. Depth maps use
// the optical-axis (z) convention throughout; multiplying a distance measured
// along the unit-direction ray by this factor converts it to z-depth.
inline double depth_axis_cosine(const CameraView& view, double px, double py) {
  const Vec3 homog(px + 0.5, py + 0.5, 1.0);
  const Vec3 dir_cam = view.intrinsics.inverse() * homog;
  return dir_cam.z() / dir_cam.norm();
}

// Pixel-center convention: integer index (x, y) sits at (x + 0.5, y + 0.5).
inline Ray pixel_ray(const CameraView& view, double px, double py,
                     double t_near, double t_far) {
  if (px < 0 || py < 0 || px >= view.width() || py >= view.height())
    throw ArgumentError("pixel_ray: pixel outside image bounds");
  const Vec3 homog(px + 0.5, py + 0.5, 1.0);
  const Vec3 dir_cam = view.intrinsics.inverse() * homog;
  Ray ray;
  ray.origin = view.translation;
  ray.direction = (view.rotation * dir_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

// Continuous pixel coordinates of a world point; z is camera-frame depth.
inline Vec3 project_point(const CameraView& view, const Vec3& world_point) {
  const Vec3 cam = view.rotation.transpose() * (world_point - view.translation);
  const Vec3 proj = view.intrinsics * cam;
  return Vec3(proj.x() / cam.z(), proj.y() / cam.z(), cam.z());
}

struct Reprojection {
  double px = 0.0;           // sub-pixel target coordinates
  double py = 0.0;
  double depth_in_target = 0.0;
  bool in_frustum = false;   // depth_in_target > 0
  bool in_bounds = false;    // inside target image, needs target size
};

// p' ~ K (R depth K^-1 p_h + t), p_h = (px, py, 1) at continuous coords.
inline Reprojection reproject(double px, double py, double depth, const Mat3& k,
                              const RelativePose& rel, int target_height = 0,
                              int target_width = 0) {
  if (depth <= 0) throw ArgumentError("reproject: depth must be positive");
  if (rel.rotation == Mat3::Identity() && rel.translation == Vec3::Zero()) {
    Reprojection out;
    out.px = px;
    out.py = py;
    out.depth_in_target = depth;
    out.in_frustum = true;
    out.in_bounds = target_height <= 0 ||
                    (px >= 0 && py >= 0 && px < target_width && py < target_height);
    return out;
  }
  const Vec3 homog(px, py, 1.0);
  const Vec3 point_target = rel.rotation * (depth * (k.inverse() * homog)) +
                            rel.translation;
  Reprojection out;
  out.depth_in_target = point_target.z();
  out.in_frustum = point_target.z() > 0;
  if (out.in_frustum) {
    const Vec3 proj = k * point_target;
    out.px = proj.x() / point_target.z();
    out.py = proj.y() / point_target.z();
    if (target_height > 0 && target_width > 0)
      out.in_bounds = out.px >= 0 && out.py >= 0 && out.px < target_width &&
                      out.py < target_height;
  }
  return out;
}

// Nearest pixel index for a continuous coordinate under the center convention.
inline int nearest_pixel(double coord) {
  return static_cast<int>(std::floor(coord));
}

}  // namespace mdnerf
