#pragma once

#include <cmath>
#include <vector>

#include "mdnerf/alignment.hpp"
#include "mdnerf/camera.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"

namespace mdnerf {

// Per-pixel boolean mask gating every distillation loss. A pixel is accepted
// when its aligned depth, reprojected into the partner view, agrees with the
// partner's rendered depth within tau.
struct ConfidenceMask {
  Image<uint8_t> values;
  double coverage = 0.0;
  int source_view = -1;
  int target_view = -1;
  bool degenerate_fit = false;

  ConfidenceMask() = default;
  ConfidenceMask(int height, int width)
      : values(height, width, 1, 0) {}

  bool at(int y, int x) const { return values.at(y, x) != 0; }
  void finalize() {
    size_t n_true = 0;
    for (uint8_t v : values.raw()) n_true += v ? 1 : 0;
    coverage = values.size() ? static_cast<double>(n_true) / values.size() : 0.0;
  }
  std::vector<uint8_t> patch_mask(const PatchSpec& patch) const {
    std::vector<uint8_t> out(patch.pixel_count());
    int idx = 0;
    for (int i = 0; i < patch.height; ++i)
      for (int j = 0; j < patch.width; ++j, ++idx)
        out[idx] = values.at(patch.pixel_y(i), patch.pixel_x(j));
    return out;
  }
};

// Whole-image (w,q) alignment of the provider depth onto the rendered depth,
// then per-pixel reprojection into the partner view with nearest-neighbor
// depth lookup. Out-of-frustum, out-of-bounds, and invalid pixels are false.
inline ConfidenceMask build_confidence_mask(
    const DepthMap& provider_depth_source, const DepthMap& rendered_depth_source,
    const DepthMap& rendered_depth_target, const Mat3& intrinsics,
    const RelativePose& source_to_target, double tau, int source_view = -1,
    int target_view = -1) {
  if (tau <= 0) throw ArgumentError("confidence: tau must be positive");
  const int height = provider_depth_source.height();
  const int width = provider_depth_source.width();
  if (rendered_depth_source.height() != height ||
      rendered_depth_source.width() != width)
    throw ArgumentError("confidence: source depth dimension mismatch");

  ConfidenceMask mask(height, width);
  mask.source_view = source_view;
  mask.target_view = target_view;

  // Image-level least-squares fit of the provider map onto rendered depth.
  std::vector<double> source(static_cast<size_t>(height) * width);
  std::vector<double> target(source.size());
  std::vector<uint8_t> valid(source.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const size_t idx = static_cast<size_t>(y) * width + x;
      source[idx] = provider_depth_source.at(y, x);
      target[idx] = rendered_depth_source.at(y, x);
      valid[idx] = provider_depth_source.valid(y, x) &&
                   rendered_depth_source.valid(y, x);
    }
  const FitResult fitted = fit_scale_shift(source, target, valid);
  if (!fitted.fit) {
    mask.degenerate_fit = true;
    mask.finalize();
    return mask;
  }

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const size_t idx = static_cast<size_t>(y) * width + x;
      if (!valid[idx]) continue;
      const double aligned = fitted.fit->apply(source[idx]);
      if (aligned <= 0) continue;
      const Reprojection repro =
          reproject(x + 0.5, y + 0.5, aligned, intrinsics, source_to_target,
                    rendered_depth_target.height(), rendered_depth_target.width());
      if (!repro.in_frustum || !repro.in_bounds) continue;
      const int tx = nearest_pixel(repro.px);
      const int ty = nearest_pixel(repro.py);
      if (!rendered_depth_target.valid(ty, tx)) continue;
      if (std::abs(repro.depth_in_target - rendered_depth_target.at(ty, tx)) < tau)
        mask.values.at(y, x) = 1;
    }
  mask.finalize();
  return mask;
}

// Seen-view mask: provider output on the seen image vs. rendered depth of a
// partner view.
inline ConfidenceMask build_mask_seen(const DepthMap& provider_depth_seen,
                                      const DepthMap& rendered_depth_seen,
                                      const DepthMap& rendered_depth_partner,
                                      const Mat3& intrinsics,
                                      const RelativePose& seen_to_partner,
                                      double tau, int source_view = -1,
                                      int target_view = -1) {
  return build_confidence_mask(provider_depth_seen, rendered_depth_seen,
                               rendered_depth_partner, intrinsics,
                               seen_to_partner, tau, source_view, target_view);
}

// Index of the seen view with the nearest camera center (pose distance).
inline size_t nearest_seen_view(const Vec3& camera_center,
                                const std::vector<CameraView>& seen_views) {
  if (seen_views.empty())
    throw ArgumentError("nearest_seen_view: empty view list");
  size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < seen_views.size(); ++i) {
    const double dist = (seen_views[i].translation - camera_center).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

// Unseen-view mask, mirroring the seen construction: the provider depth of
// the rendered unseen image is aligned to the unseen rendered depth and
// checked against the single nearest seen view's rendered depth.
inline ConfidenceMask build_mask_unseen(const DepthMap& provider_depth_unseen,
                                        const DepthMap& rendered_depth_unseen,
                                        const DepthMap& rendered_depth_nearest_seen,
                                        const Mat3& intrinsics,
                                        const RelativePose& unseen_to_seen,
                                        double tau, int source_view = -1,
                                        int target_view = -1) {
  return build_confidence_mask(provider_depth_unseen, rendered_depth_unseen,
                               rendered_depth_nearest_seen, intrinsics,
                               unseen_to_seen, tau, source_view, target_view);
}

}  // namespace mdnerf
