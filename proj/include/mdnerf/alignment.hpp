#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"

namespace mdnerf {

// The (w, q) pair aligning a relative depth patch to absolute depth.
// Recomputed from current values every step; never carries gradients.
struct ScaleShift {
  double scale = 1.0;
  double shift = 0.0;

  double apply(double value) const { return scale * value + shift; }
};

struct DegenerateFit {
  int patch_origin_y = 0;
  int patch_origin_x = 0;
  const char* reason = "";
};

struct FitResult {
  std::optional<ScaleShift> fit;
  std::optional<DegenerateFit> degenerate;
};

// Closed-form minimizer of sum (w*source + q - target)^2 over masked-in
// pixels, via the 2x2 normal equations. Fails on < 2 valid pixels or a
// constant source (singular system).
inline FitResult fit_scale_shift(const std::vector<double>& source,
                                 const std::vector<double>& target,
                                 const std::vector<uint8_t>& mask,
                                 int patch_origin_y = 0, int patch_origin_x = 0) {
  if (source.size() != target.size() || source.size() != mask.size())
    throw ArgumentError("fit_scale_shift: size mismatch");
  double sum_ss = 0, sum_s = 0, sum_st = 0, sum_t = 0;
  size_t n = 0;
  for (size_t i = 0; i < source.size(); ++i) {
    if (!mask[i]) continue;
    sum_ss += source[i] * source[i];
    sum_s += source[i];
    sum_st += source[i] * target[i];
    sum_t += target[i];
    ++n;
  }
  FitResult result;
  if (n < 2) {
    result.degenerate = DegenerateFit{patch_origin_y, patch_origin_x,
                                      "fewer than 2 valid pixels"};
    return result;
  }
  const double det = sum_ss * static_cast<double>(n) - sum_s * sum_s;
  // det = n * sum((s - mean_s)^2); vanishes iff the source is constant.
  const double scale_ref = std::max(sum_ss * static_cast<double>(n), 1.0);
  if (std::abs(det) < 1e-12 * scale_ref) {
    result.degenerate =
        DegenerateFit{patch_origin_y, patch_origin_x, "constant source (singular fit)"};
    return result;
  }
  ScaleShift fit;
  fit.scale = (static_cast<double>(n) * sum_st - sum_s * sum_t) / det;
  fit.shift = (sum_ss * sum_t - sum_s * sum_st) / det;
  result.fit = fit;
  return result;
}

// Gathers a strided patch from a depth map into flat row-major vectors.
inline void gather_patch(const DepthMap& map, const PatchSpec& patch,
                         std::vector<double>* values, std::vector<uint8_t>* valid) {
  if (!patch.inside(map.height(), map.width()))
    throw ArgumentError("gather_patch: patch outside image bounds");
  values->resize(patch.pixel_count());
  valid->resize(patch.pixel_count());
  int idx = 0;
  for (int i = 0; i < patch.height; ++i)
    for (int j = 0; j < patch.width; ++j, ++idx) {
      const int y = patch.pixel_y(i);
      const int x = patch.pixel_x(j);
      (*values)[idx] = map.at(y, x);
      (*valid)[idx] = map.valid(y, x) ? 1 : 0;
    }
}

// L1 subgradient with the convention sign(0) = 0.
inline double l1_sign(double residual) {
  return residual > 0 ? 1.0 : residual < 0 ? -1.0 : 0.0;
}

struct PatchLoss {
  double loss = 0.0;
  // dLoss/d(target argument) per patch pixel, row-major; zero where masked out.
  std::vector<double> grad;
  int n_active = 0;
  std::optional<DegenerateFit> degenerate;
  std::optional<ScaleShift> fit;
};

namespace detail {

// Masked L1 between an affine-aligned source and a target, gradient on the
// chosen side. Shared core of the seen/unseen distillation losses.
inline PatchLoss affine_l1_loss(const std::vector<double>& source,
                                const std::vector<double>& target,
                                const std::vector<uint8_t>& mask,
                                const PatchSpec& patch, bool grad_on_target) {
  PatchLoss out;
  out.grad.assign(source.size(), 0.0);
  FitResult fitted =
      fit_scale_shift(source, target, mask, patch.origin_y, patch.origin_x);
  if (!fitted.fit) {
    out.degenerate = fitted.degenerate;
    return out;
  }
  out.fit = fitted.fit;
  for (size_t i = 0; i < source.size(); ++i) {
    if (!mask[i]) continue;
    const double residual = fitted.fit->apply(source[i]) - target[i];
    out.loss += std::abs(residual);
    out.grad[i] = grad_on_target ? -l1_sign(residual) : l1_sign(residual);
    ++out.n_active;
  }
  return out;
}

inline std::vector<uint8_t> combine_masks(const std::vector<uint8_t>& a,
                                          const std::vector<uint8_t>& b) {
  std::vector<uint8_t> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

}  // namespace detail

// L_seen: per-patch (w,q) aligns the provider depth onto the rendered depth;
// masked L1 with gradient flowing only into the rendered depth. The provider
// values and (w,q) are constants here.
inline PatchLoss loss_seen(const DepthMap& provider_depth,
                           const DepthMap& rendered_depth,
                           const PatchSpec& patch,
                           const std::vector<uint8_t>& confidence) {
  std::vector<double> source, target;
  std::vector<uint8_t> source_valid, target_valid;
  gather_patch(provider_depth, patch, &source, &source_valid);
  gather_patch(rendered_depth, patch, &target, &target_valid);
  auto mask = detail::combine_masks(
      detail::combine_masks(source_valid, target_valid), confidence);
  return detail::affine_l1_loss(source, target, mask, patch,
                                /*grad_on_target=*/true);
}

// L_unseen shares the contract; the source is the provider's output on the
// rendered image of an unseen view (wired in the trainer).
inline PatchLoss loss_unseen(const DepthMap& provider_depth_of_render,
                             const DepthMap& rendered_depth,
                             const PatchSpec& patch,
                             const std::vector<uint8_t>& confidence) {
  return loss_seen(provider_depth_of_render, rendered_depth, patch, confidence);
}

// L_MDE: absolute term |d_bar - d_star| plus scale-shift term with (w,q)
// fitting the rendered depth onto the provider depth. Rendered depth is a
// constant; gradient flows into the provider values only.
inline PatchLoss loss_mde(const DepthMap& rendered_depth,
                          const DepthMap& provider_depth,
                          const PatchSpec& patch,
                          const std::vector<uint8_t>& confidence) {
  std::vector<double> rendered, provider;
  std::vector<uint8_t> rendered_valid, provider_valid;
  gather_patch(rendered_depth, patch, &rendered, &rendered_valid);
  gather_patch(provider_depth, patch, &provider, &provider_valid);
  const auto mask = detail::combine_masks(
      detail::combine_masks(rendered_valid, provider_valid), confidence);

  PatchLoss out;
  out.grad.assign(provider.size(), 0.0);
  for (size_t i = 0; i < provider.size(); ++i) {
    if (!mask[i]) continue;
    const double residual = rendered[i] - provider[i];
    out.loss += std::abs(residual);
    out.grad[i] += -l1_sign(residual);
    ++out.n_active;
  }

  FitResult fitted =
      fit_scale_shift(rendered, provider, mask, patch.origin_y, patch.origin_x);
  if (fitted.fit) {
    out.fit = fitted.fit;
    for (size_t i = 0; i < provider.size(); ++i) {
      if (!mask[i]) continue;
      const double residual = fitted.fit->apply(rendered[i]) - provider[i];
      out.loss += std::abs(residual);
      out.grad[i] += -l1_sign(residual);
    }
  } else {
    // Degenerate scale-shift term is skipped; the absolute term stands.
    out.degenerate = fitted.degenerate;
  }
  return out;
}

// L_reg: keeps the adapted provider within the affine family of its initial
// output. (w,q) fits the frozen initial map onto the current one; gradient
// flows into the current provider values.
inline PatchLoss loss_reg(const DepthMap& initial_depth,
                          const DepthMap& provider_depth,
                          const PatchSpec& patch) {
  std::vector<double> initial, provider;
  std::vector<uint8_t> initial_valid, provider_valid;
  gather_patch(initial_depth, patch, &initial, &initial_valid);
  gather_patch(provider_depth, patch, &provider, &provider_valid);
  const auto mask = detail::combine_masks(initial_valid, provider_valid);
  return detail::affine_l1_loss(initial, provider, mask, patch,
                                /*grad_on_target=*/true);
}

}  // namespace mdnerf
