#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mdnerf/camera.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"

namespace mdnerf {

enum class PrimitiveKind { kSphere, kBox, kPlane };

struct ScenePrimitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // half-extents for box/plane; size.x() = radius for sphere
  Vec3 albedo = Vec3(0.5, 0.5, 0.5);

  void check() const {
    if (size.minCoeff() <= 0)
      throw ArgumentError("ScenePrimitive: size components must be positive");
    if (albedo.minCoeff() < 0 || albedo.maxCoeff() > 1)
      throw ArgumentError("ScenePrimitive: albedo outside [0,1]");
  }

  bool contains(const Vec3& point) const {
    if (kind == PrimitiveKind::kSphere)
      return (point - center).norm() < size.x();
    const Vec3 local = (point - center).cwiseAbs();
    return local.x() < size.x() && local.y() < size.y() && local.z() < size.z();
  }
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  double diagonal() const { return (max - min).norm(); }
  bool contains(const Vec3& p) const {
    return (p.array() > min.array()).all() && (p.array() < max.array()).all();
  }
};

struct SceneSpec {
  std::vector<ScenePrimitive> primitives;
  Vec3 background_color = Vec3::Zero();
  Aabb bounds;
  uint64_t seed = 0;

  void check() const {
    if (primitives.empty())
      throw ArgumentError("SceneSpec: primitive list must be non-empty");
    for (const auto& prim : primitives) {
      prim.check();
      Vec3 half = prim.size;
      if (prim.kind == PrimitiveKind::kSphere) half = Vec3::Constant(prim.size.x());
      if (!bounds.contains(prim.center - half) || !bounds.contains(prim.center + half))
        throw ArgumentError("SceneSpec: bounds do not contain every primitive");
    }
  }
};

// Nearest positive intersection distance along a unit-direction ray.
inline std::optional<double> intersect_sphere(const Vec3& origin, const Vec3& dir,
                                              const Vec3& center, double radius) {
  const Vec3 oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = -b - sq;
  if (t0 > 1e-12) return t0;
  const double t1 = -b + sq;
  if (t1 > 1e-12) return t1;
  return std::nullopt;
}

// Slab test against an axis-aligned box given by center and half-extents.
inline std::optional<double> intersect_box(const Vec3& origin, const Vec3& dir,
                                           const Vec3& center, const Vec3& half) {
  double t_min = -std::numeric_limits<double>::infinity();
  double t_max = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = center[axis] - half[axis];
    const double hi = center[axis] + half[axis];
    if (std::abs(dir[axis]) < 1e-15) {
      if (origin[axis] < lo || origin[axis] > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - origin[axis]) / dir[axis];
    double t1 = (hi - origin[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_min > t_max) return std::nullopt;
  }
  if (t_min > 1e-12) return t_min;
  if (t_max > 1e-12) return t_max;
  return std::nullopt;
}

struct SceneHit {
  double distance = 0.0;  // along the (unit) ray
  int primitive = -1;
};

inline std::optional<SceneHit> intersect_scene(const SceneSpec& spec,
                                               const Vec3& origin, const Vec3& dir) {
  std::optional<SceneHit> best;
  for (size_t i = 0; i < spec.primitives.size(); ++i) {
    const auto& prim = spec.primitives[i];
    std::optional<double> t;
    if (prim.kind == PrimitiveKind::kSphere)
      t = intersect_sphere(origin, dir, prim.center, prim.size.x());
    else
      t = intersect_box(origin, dir, prim.center, prim.size);
    if (t && (!best || *t < best->distance))
      best = SceneHit{*t, static_cast<int>(i)};
  }
  return best;
}

// Flat-shaded render with exact z-depth along the optical axis. Misses get
// the background color, depth 0, and validity false.
inline CameraView trace_scene(const SceneSpec& spec, const Mat3& intrinsics,
                              const Mat3& rotation, const Vec3& translation,
                              int height, int width, int view_id = 0) {
  spec.check();
  if (height < 2 || width < 2)
    throw ArgumentError("trace_scene: resolution must be at least 2x2");
  for (const auto& prim : spec.primitives)
    if (prim.contains(translation))
      throw GeometryError("trace_scene: camera inside a primitive");

  CameraView view;
  view.intrinsics = intrinsics;
  view.rotation = rotation;
  view.translation = translation;
  view.view_id = view_id;
  view.image = ImageRgb(height, width, 3);
  view.gt_depth = DepthMap(height, width, DepthFrame::kAbsolute);
  view.check();

  const Mat3 k_inv = intrinsics.inverse();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec3 dir_cam = (k_inv * Vec3(x + 0.5, y + 0.5, 1.0)).normalized();
      const Vec3 dir_world = rotation * dir_cam;
      const auto hit = intersect_scene(spec, translation, dir_world);
      if (hit) {
        const Vec3& albedo = spec.primitives[hit->primitive].albedo;
        // Snap to 8-bit representable values so the PPM round trip is lossless.
        for (int c = 0; c < 3; ++c)
          view.image.at(y, x, c) = std::lround(albedo[c] * 255.0) / 255.0;
        view.gt_depth->at(y, x) = hit->distance * dir_cam.z();
        view.gt_depth->validity.at(y, x) = 1;
      } else {
        for (int c = 0; c < 3; ++c)
          view.image.at(y, x, c) =
              std::lround(spec.background_color[c] * 255.0) / 255.0;
        view.gt_depth->at(y, x) = 0.0;
        view.gt_depth->validity.at(y, x) = 0;
      }
    }
  }
  return view;
}

// Look-at pose: world-from-camera with +z toward the target, +y down-ish.
inline void look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint,
                    Mat3* rotation, Vec3* translation) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up_hint).normalized();
  if (!right.allFinite() || right.norm() < 0.5)
    right = forward.cross(Vec3::UnitX()).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  *rotation = r;
  *translation = eye;
}

inline Mat3 simple_intrinsics(int height, int width, double focal_scale = 1.1) {
  Mat3 k = Mat3::Identity();
  k(0, 0) = focal_scale * width;
  k(1, 1) = focal_scale * width;
  k(0, 2) = 0.5 * width;
  k(1, 2) = 0.5 * height;
  return k;
}

// Named preset scenes used by the CLI and the experiment harness.
inline SceneSpec preset_scene(const std::string& name, uint64_t seed = 0) {
  SceneSpec spec;
  spec.seed = seed;
  spec.bounds = Aabb{Vec3(-2.0, -2.0, -2.0), Vec3(2.0, 2.0, 2.0)};
  spec.background_color = Vec3(0.1, 0.1, 0.15);
  if (name == "sphere") {
    spec.primitives.push_back(
        {PrimitiveKind::kSphere, Vec3(0, 0, 0), Vec3(0.8, 0.8, 0.8), Vec3(0.9, 0.3, 0.2)});
  } else if (name == "box") {
    spec.primitives.push_back(
        {PrimitiveKind::kBox, Vec3(0, 0.8, 0), Vec3(1.6, 0.25, 1.6), Vec3(0.55, 0.55, 0.5)});
    spec.primitives.push_back(
        {PrimitiveKind::kBox, Vec3(-0.5, 0.15, 0.1), Vec3(0.4, 0.4, 0.4), Vec3(0.85, 0.35, 0.25)});
    spec.primitives.push_back(
        {PrimitiveKind::kSphere, Vec3(0.65, 0.25, -0.3), Vec3(0.3, 0.3, 0.3), Vec3(0.25, 0.45, 0.85)});
  } else if (name == "two-box") {
    spec.primitives.push_back(
        {PrimitiveKind::kBox, Vec3(-0.7, 0, 0.2), Vec3(0.45, 0.6, 0.45), Vec3(0.85, 0.3, 0.25)});
    spec.primitives.push_back(
        {PrimitiveKind::kBox, Vec3(0.7, 0, -0.2), Vec3(0.45, 0.45, 0.45), Vec3(0.25, 0.6, 0.85)});
  } else if (name == "two-object") {
    // One near, one far: distinct depth ranges so per-region affine
    // distortions are separable by patch fits but not by a global fit.
    spec.primitives.push_back(
        {PrimitiveKind::kSphere, Vec3(-0.8, 0, -0.6), Vec3(0.45, 0.45, 0.45), Vec3(0.9, 0.4, 0.2)});
    spec.primitives.push_back(
        {PrimitiveKind::kBox, Vec3(0.8, 0, 0.8), Vec3(0.5, 0.5, 0.5), Vec3(0.2, 0.5, 0.9)});
  } else {
    throw ArgumentError("preset_scene: unknown scene '" + name + "'");
  }
  spec.check();
  return spec;
}

// Cameras on an orbit around the scene center, all looking inward.
inline std::vector<CameraView> orbit_views(const SceneSpec& spec, int n_views,
                                           int height, int width,
                                           double radius = 4.0,
                                           double elevation = 0.6) {
  std::vector<CameraView> views;
  const Vec3 target = spec.bounds.center();
  const Mat3 k = simple_intrinsics(height, width);
  for (int i = 0; i < n_views; ++i) {
    const double angle = 2.0 * M_PI * i / n_views;
    const Vec3 eye = target + Vec3(radius * std::cos(angle), -elevation,
                                   radius * std::sin(angle));
    Mat3 rotation;
    Vec3 translation;
    look_at(eye, target, Vec3(0, -1, 0), &rotation, &translation);
    views.push_back(trace_scene(spec, k, rotation, translation, height, width, i));
  }
  return views;
}

}  // namespace mdnerf
