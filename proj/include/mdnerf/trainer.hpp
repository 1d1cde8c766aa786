#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mdnerf/alignment.hpp"
#include "mdnerf/camera.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/confidence.hpp"
#include "mdnerf/dataset_io.hpp"
#include "mdnerf/field.hpp"
#include "mdnerf/optimizer.hpp"
#include "mdnerf/provider.hpp"
#include "mdnerf/scene.hpp"

namespace mdnerf {

struct TrainConfig {
  // Desk-scale defaults; schedule fractions follow the reference recipe
  // (warm-up ratios preserved rather than absolute step counts).
  double lr_field = 1e-2;
  double lr_provider = 5e-3;
  double coeff_recon = 1.0;
  double coeff_seen = 0.001;
  double coeff_mde = 1.0;
  double coeff_reg = 0.1;
  double coeff_unseen = 0.001;
  int unseen_warmup_steps = -1;  // -1 = 25% of total_steps
  int field_warmup_steps = -1;   // -1 = 2.56% of total_steps (512/20k)
  // Provider adaptation starts after the field's depth is trustworthy;
  // adapting against the early, unconverged rendering lets the provider and
  // field drift together and injects non-affine noise into every patch fit.
  int provider_warmup_steps = -1;  // -1 = same as the unseen warm-up
  int total_steps = 4000;
  int pixel_batch = 1024;
  int seen_patch_size = 24;
  int seen_patch_stride = 1;
  int unseen_patch_size = 16;
  int unseen_patch_stride = 3;
  double tau = 0.0;              // 0 = 0.05 x scene diagonal
  int n_samples_per_ray = 64;
  double opacity_threshold = 0.5;
  // Stricter gate for provider adaptation: the provider is only pulled
  // toward rendered depth where the ray is nearly saturated, i.e. where the
  // weighted-sum depth is a trustworthy surface estimate. Distillation into
  // the field keeps the looser opacity_threshold.
  double mde_opacity_threshold = 0.95;
  uint64_t seed = 0;
  int grid_resolution = 48;
  int mask_interval = 100;       // confidence/full-view render refresh period
  int threads = 1;
  bool global_fit = false;       // image-level (w,q) for L_seen instead of per patch

  int resolved_unseen_warmup() const {
    return unseen_warmup_steps >= 0 ? unseen_warmup_steps : total_steps / 4;
  }
  int resolved_provider_warmup() const {
    return provider_warmup_steps >= 0 ? provider_warmup_steps
                                      : resolved_unseen_warmup();
  }
  int resolved_field_warmup() const {
    if (field_warmup_steps >= 0) return field_warmup_steps;
    return std::max(1, static_cast<int>(std::lround(total_steps * 512.0 / 20000.0)));
  }

  void check() const {
    if (lr_field <= 0 || lr_provider <= 0)
      throw ArgumentError("TrainConfig: learning rates must be positive");
    if (total_steps < 0) throw ArgumentError("TrainConfig: negative total_steps");
    if (resolved_unseen_warmup() > total_steps && total_steps > 0)
      throw ArgumentError("TrainConfig: warm-up exceeds total_steps");
    if (opacity_threshold <= 0 || opacity_threshold > 1)
      throw ArgumentError("TrainConfig: opacity_threshold outside (0,1]");
    if (n_samples_per_ray < 2)
      throw ArgumentError("TrainConfig: n_samples_per_ray must be >= 2");
  }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lr_field", cfg.lr_field);
  get("lr_provider", cfg.lr_provider);
  get("coeff_recon", cfg.coeff_recon);
  get("coeff_seen", cfg.coeff_seen);
  get("coeff_mde", cfg.coeff_mde);
  get("coeff_reg", cfg.coeff_reg);
  get("coeff_unseen", cfg.coeff_unseen);
  get("unseen_warmup_steps", cfg.unseen_warmup_steps);
  get("field_warmup_steps", cfg.field_warmup_steps);
  get("provider_warmup_steps", cfg.provider_warmup_steps);
  get("total_steps", cfg.total_steps);
  get("pixel_batch", cfg.pixel_batch);
  get("seen_patch_size", cfg.seen_patch_size);
  get("seen_patch_stride", cfg.seen_patch_stride);
  get("unseen_patch_size", cfg.unseen_patch_size);
  get("unseen_patch_stride", cfg.unseen_patch_stride);
  get("tau", cfg.tau);
  get("n_samples_per_ray", cfg.n_samples_per_ray);
  get("opacity_threshold", cfg.opacity_threshold);
  get("mde_opacity_threshold", cfg.mde_opacity_threshold);
  get("seed", cfg.seed);
  get("grid_resolution", cfg.grid_resolution);
  get("mask_interval", cfg.mask_interval);
  get("threads", cfg.threads);
  get("global_fit", cfg.global_fit);
  cfg.check();
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"lr_field", cfg.lr_field},
                        {"lr_provider", cfg.lr_provider},
                        {"coeff_recon", cfg.coeff_recon},
                        {"coeff_seen", cfg.coeff_seen},
                        {"coeff_mde", cfg.coeff_mde},
                        {"coeff_reg", cfg.coeff_reg},
                        {"coeff_unseen", cfg.coeff_unseen},
                        {"unseen_warmup_steps", cfg.unseen_warmup_steps},
                        {"field_warmup_steps", cfg.field_warmup_steps},
                        {"provider_warmup_steps", cfg.provider_warmup_steps},
                        {"total_steps", cfg.total_steps},
                        {"pixel_batch", cfg.pixel_batch},
                        {"seen_patch_size", cfg.seen_patch_size},
                        {"seen_patch_stride", cfg.seen_patch_stride},
                        {"unseen_patch_size", cfg.unseen_patch_size},
                        {"unseen_patch_stride", cfg.unseen_patch_stride},
                        {"tau", cfg.tau},
                        {"n_samples_per_ray", cfg.n_samples_per_ray},
                        {"opacity_threshold", cfg.opacity_threshold},
                        {"mde_opacity_threshold", cfg.mde_opacity_threshold},
                        {"seed", cfg.seed},
                        {"grid_resolution", cfg.grid_resolution},
                        {"mask_interval", cfg.mask_interval},
                        {"threads", cfg.threads},
                        {"global_fit", cfg.global_fit}};
}

struct LossLogEntry {
  int step;
  std::string name;
  double value;
};

struct TrainResult {
  RadianceFieldGrid field{2, 2, 2, Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}};
  DepthProvider provider;
  std::vector<LossLogEntry> loss_log;
  long degenerate_fit_skips = 0;
  long negative_scale_fits = 0;
  double t_near = 0.1;
  double t_far = 10.0;
};

inline void write_loss_log_csv(const std::vector<LossLogEntry>& log,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "step,loss_name,value\n";
  char buf[64];
  for (const auto& entry : log) {
    std::snprintf(buf, sizeof(buf), "%.17g", entry.value);
    out << entry.step << "," << entry.name << "," << buf << "\n";
  }
}

// Rotation interpolation via normalized quaternion blend.
inline Mat3 blend_rotations(const Mat3& a, const Mat3& b, double u) {
  Eigen::Quaterniond qa(a), qb(b);
  if (qa.dot(qb) < 0) qb.coeffs() = -qb.coeffs();
  Eigen::Quaterniond q;
  q.coeffs() = (1 - u) * qa.coeffs() + u * qb.coeffs();
  q.normalize();
  return q.toRotationMatrix();
}

// Novel pose between a random pair of seen views.
inline CameraView sample_unseen_view(const std::vector<CameraView>& seen,
                                     std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> pick(0, seen.size() - 1);
  size_t i = pick(rng), j = pick(rng);
  while (j == i) j = pick(rng);
  std::uniform_real_distribution<double> blend(0.25, 0.75);
  const double u = blend(rng);
  CameraView view;
  view.intrinsics = seen[i].intrinsics;
  view.rotation = blend_rotations(seen[i].rotation, seen[j].rotation, u);
  view.translation = (1 - u) * seen[i].translation + u * seen[j].translation;
  view.image = ImageRgb(seen[i].height(), seen[i].width(), 3);
  view.view_id = -1;
  return view;
}

namespace detail {

// Fixed-chunk parallel loop; chunk count equals the thread budget so the
// reduction order is a function of the config, not the scheduler.
template <typename Fn>
void parallel_chunks(long n, int threads, Fn&& fn) {
  const int chunks = std::max(1, threads);
  if (chunks == 1 || n < 2 * chunks) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  const long per = (n + chunks - 1) / chunks;
  for (int c = 0; c < chunks; ++c) {
    const long start = c * per;
    const long end = std::min(n, start + per);
    if (start >= end) break;
    pool.emplace_back([&fn, start, end, c] { fn(start, end, c); });
  }
  for (auto& t : pool) t.join();
}

struct SceneContext {
  std::optional<SceneSpec> scene;
  std::vector<std::vector<int>> regions;  // per seen view, empty if no scene
  double t_near = 0.1;
  double t_far = 10.0;
  double tau = 0.0;
  Aabb grid_bounds;
  Vec3 background = Vec3::Zero();
};

inline SceneContext make_scene_context(const std::vector<CameraView>& views,
                                       const std::optional<SceneSpec>& scene,
                                       const TrainConfig& config) {
  SceneContext ctx;
  ctx.scene = scene;
  if (scene) {
    ctx.grid_bounds = scene->bounds;
    ctx.background = scene->background_color;
    for (const auto& view : views) ctx.regions.push_back(region_map(*scene, view));
  } else {
    ctx.grid_bounds = Aabb{Vec3(-2, -2, -2), Vec3(2, 2, 2)};
    // Fall back to the first view's corner pixel as the background estimate.
    const auto& img = views.front().image;
    ctx.background = Vec3(img.at(0, 0, 0), img.at(0, 0, 1), img.at(0, 0, 2));
    ctx.regions.resize(views.size());
  }
  const Vec3 center = ctx.grid_bounds.center();
  const double half_diag = 0.5 * ctx.grid_bounds.diagonal();
  double min_near = std::numeric_limits<double>::infinity();
  double max_far = 0.0;
  for (const auto& view : views) {
    const double dist = (view.translation - center).norm();
    min_near = std::min(min_near, dist - half_diag);
    max_far = std::max(max_far, dist + half_diag);
  }
  ctx.t_near = std::max(0.05, 0.8 * min_near);
  ctx.t_far = 1.1 * max_far;
  ctx.tau = config.tau > 0 ? config.tau : 0.05 * ctx.grid_bounds.diagonal();
  return ctx;
}

// Full-view depth render, parallel over rows, validity by opacity threshold.
inline DepthMap render_view_depth(const RadianceFieldGrid& grid,
                                  const CameraView& view, const TrainConfig& config,
                                  const SceneContext& ctx) {
  DepthMap depth(view.height(), view.width(), DepthFrame::kAbsolute);
  parallel_chunks(view.height(), config.threads, [&](long y0, long y1, int) {
    for (long y = y0; y < y1; ++y)
      for (int x = 0; x < view.width(); ++x) {
        const Ray ray = pixel_ray(view, x, static_cast<double>(y), ctx.t_near, ctx.t_far);
        const RenderResult r = render_ray(grid, ray, config.n_samples_per_ray);
        depth.at(static_cast<int>(y), x) =
            r.depth * depth_axis_cosine(view, x, static_cast<double>(y));
        depth.validity.at(static_cast<int>(y), x) =
            r.opacity >= config.opacity_threshold ? 1 : 0;
      }
  });
  return depth;
}

}  // namespace detail

// The complementary training loop: photometric reconstruction plus masked
// depth distillation into the field, and absolute-depth adaptation plus
// smoothness regularization into the provider, every step.
inline TrainResult train(const std::vector<CameraView>& views,
                         DepthProvider provider, const TrainConfig& config,
                         const std::optional<SceneSpec>& scene = std::nullopt) {
  config.check();
  if (views.size() < 2)
    throw ArgumentError(">= 2 views required for training");
  for (const auto& view : views)
    if (!view.gt_depth)
      throw ArgumentError("train: every seen view needs a provider backdoor depth");

  const detail::SceneContext ctx = detail::make_scene_context(views, scene, config);

  TrainResult result;
  result.t_near = ctx.t_near;
  result.t_far = ctx.t_far;
  result.field = RadianceFieldGrid(config.grid_resolution, config.grid_resolution,
                                   config.grid_resolution, ctx.grid_bounds,
                                   ctx.background);
  RadianceFieldGrid& field = result.field;

  // Frozen initial predictions for the regularizer.
  std::vector<const CameraView*> view_ptrs;
  std::vector<const std::vector<int>*> region_ptrs;
  for (size_t i = 0; i < views.size(); ++i) {
    view_ptrs.push_back(&views[i]);
    region_ptrs.push_back(&ctx.regions[i]);
  }
  const std::vector<DepthMap> initial_maps =
      ctx.scene ? provider.snapshot_initial(view_ptrs, &region_ptrs)
                : provider.snapshot_initial(view_ptrs);

  if (config.total_steps == 0) {
    result.provider = std::move(provider);
    return result;
  }

  AdamState density_opt(field.node_count());
  AdamState color_opt(field.node_count() * 3);
  ProviderOptimizer provider_opt(provider);

  // Independent RNG streams so toggling one phase never perturbs another
  // (common random numbers across ablation variants).
  std::mt19937_64 recon_rng(config.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::mt19937_64 patch_rng(config.seed * 0x9e3779b97f4a7c15ULL + 2);
  std::mt19937_64 unseen_rng(config.seed * 0x9e3779b97f4a7c15ULL + 3);

  const int unseen_warmup = config.resolved_unseen_warmup();
  const int field_warmup = config.resolved_field_warmup();
  const int provider_warmup = config.resolved_provider_warmup();
  const bool depth_on = config.coeff_seen > 0 || config.coeff_unseen > 0;
  const bool provider_on = config.coeff_mde > 0 || config.coeff_reg > 0;

  // Cached per-seen-view rendered depths and confidence masks, refreshed
  // every mask_interval steps.
  std::vector<DepthMap> cached_depths(views.size());
  std::vector<ConfidenceMask> cached_masks(views.size());
  std::vector<ScaleShift> cached_image_fits(views.size());
  std::vector<uint8_t> cached_fit_ok(views.size(), 0);
  int last_refresh = -1;

  auto refresh_caches = [&]() {
    for (size_t i = 0; i < views.size(); ++i)
      cached_depths[i] = detail::render_view_depth(field, views[i], config, ctx);
    for (size_t i = 0; i < views.size(); ++i) {
      const DepthMap provider_depth = provider.predict(
          views[i].image, *views[i].gt_depth,
          ctx.regions[i].empty() ? nullptr : &ctx.regions[i], views[i].view_id);
      // Image-level fit, reused by global-fit mode.
      std::vector<double> src, tgt;
      std::vector<uint8_t> valid;
      PatchSpec whole{0, 0, views[i].height(), views[i].width(), 1};
      gather_patch(provider_depth, whole, &src, &valid);
      std::vector<uint8_t> tgt_valid;
      gather_patch(cached_depths[i], whole, &tgt, &tgt_valid);
      for (size_t p = 0; p < valid.size(); ++p) valid[p] = valid[p] && tgt_valid[p];
      const FitResult fit = fit_scale_shift(src, tgt, valid);
      cached_fit_ok[i] = fit.fit.has_value() ? 1 : 0;
      if (fit.fit) {
        cached_image_fits[i] = *fit.fit;
        if (fit.fit->scale < 0) ++result.negative_scale_fits;
      }
      // Partner for the seen mask: nearest other seen view.
      size_t partner = i == 0 ? 1 : 0;
      double best = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < views.size(); ++j) {
        if (j == i) continue;
        const double d = (views[j].translation - views[i].translation).norm();
        if (d < best) {
          best = d;
          partner = j;
        }
      }
      cached_masks[i] = build_mask_seen(
          provider_depth, cached_depths[i], cached_depths[partner],
          views[i].intrinsics, RelativePose::between(views[i], views[partner]),
          ctx.tau, views[i].view_id, views[partner].view_id);
    }
  };

  auto check_finite = [](double value, int step, const char* name) {
    if (!std::isfinite(value))
      throw NumericalError(std::string("NaN in ") + name + " at step " +
                           std::to_string(step));
  };

  GridGradients field_grads(field);
  std::vector<GridGradients> chunk_grads;
  for (int c = 0; c < std::max(1, config.threads); ++c)
    chunk_grads.emplace_back(field);

  for (int step = 0; step < config.total_steps; ++step) {
    const double lr_mult =
        warmup_cosine_multiplier(step, field_warmup, config.total_steps);
    const double lr_field = config.lr_field * std::max(lr_mult, 1e-3);

    if ((depth_on || provider_on) &&
        (last_refresh < 0 || step - last_refresh >= config.mask_interval)) {
      refresh_caches();
      last_refresh = step;
    }

    std::uniform_int_distribution<size_t> pick_view(0, views.size() - 1);

    // --- Phase 1: photometric reconstruction on a random pixel batch ---
    field_grads.reset();
    if (config.coeff_recon > 0) {
    struct PixelPick {
      size_t view;
      int x, y;
    };
    std::vector<PixelPick> picks(config.pixel_batch);
    for (auto& p : picks) {
      p.view = pick_view(recon_rng);
      p.x = std::uniform_int_distribution<int>(0, views[p.view].width() - 1)(recon_rng);
      p.y = std::uniform_int_distribution<int>(0, views[p.view].height() - 1)(recon_rng);
    }
    std::vector<double> chunk_loss(chunk_grads.size(), 0.0);
    for (auto& g : chunk_grads) g.reset();
    detail::parallel_chunks(
        static_cast<long>(picks.size()), config.threads,
        [&](long start, long end, int chunk) {
          for (long n = start; n < end; ++n) {
            const auto& p = picks[n];
            const CameraView& view = views[p.view];
            const Ray ray = pixel_ray(view, p.x, p.y, ctx.t_near, ctx.t_far);
            const RenderResult r = render_ray(field, ray, config.n_samples_per_ray);
            const Vec3 rendered = r.composited(field.background());
            const Vec3 target(view.image.at(p.y, p.x, 0), view.image.at(p.y, p.x, 1),
                              view.image.at(p.y, p.x, 2));
            const Vec3 diff = rendered - target;
            chunk_loss[chunk] += diff.squaredNorm();
            const Vec3 d_color = 2.0 * diff;
            const double d_opacity = -d_color.dot(field.background());
            render_ray_backward(field, ray, r, d_color, 0.0, d_opacity,
                                &chunk_grads[chunk]);
          }
        });
    double loss_recon = 0.0;
    for (size_t c = 0; c < chunk_grads.size(); ++c) {
      loss_recon += chunk_loss[c];
      field_grads.add(chunk_grads[c]);
    }
    loss_recon *= config.coeff_recon / picks.size();
    const double grad_scale = config.coeff_recon / picks.size();
    for (auto& g : field_grads.density) g *= grad_scale;
    for (auto& g : field_grads.color) g *= grad_scale;
    check_finite(loss_recon, step, "loss_recon");
    result.loss_log.push_back({step, "recon", loss_recon});
    }

    // --- Phase 2: seen-view distillation and provider adaptation ---
    double seen_value = 0.0, mde_value = 0.0, reg_value = 0.0;
    if (depth_on || provider_on) {
      const size_t vi = pick_view(patch_rng);
      const CameraView& view = views[vi];
      const int span = config.seen_patch_stride * (config.seen_patch_size - 1) + 1;
      PatchSpec patch;
      patch.height = patch.width = config.seen_patch_size;
      patch.stride = config.seen_patch_stride;
      patch.origin_y =
          std::uniform_int_distribution<int>(0, view.height() - span)(patch_rng);
      patch.origin_x =
          std::uniform_int_distribution<int>(0, view.width() - span)(patch_rng);

      PatchRender rendered = render_patch(field, view, patch,
                                          config.n_samples_per_ray, ctx.t_near,
                                          ctx.t_far);
      // Patch-footprint depth map with opacity-gated validity.
      DepthMap rendered_depth(view.height(), view.width(), DepthFrame::kAbsolute);
      std::fill(rendered_depth.validity.raw().begin(),
                rendered_depth.validity.raw().end(), 0);
      for (int i = 0; i < patch.height; ++i)
        for (int j = 0; j < patch.width; ++j) {
          rendered_depth.at(patch.pixel_y(i), patch.pixel_x(j)) =
              rendered.depth.at(i, j);
          rendered_depth.validity.at(patch.pixel_y(i), patch.pixel_x(j)) =
              rendered.opacity.at(i, j) >= config.opacity_threshold ? 1 : 0;
        }

      const DepthProvider::PredictDetail provider_out = provider.predict_detail(
          view.image, *view.gt_depth,
          ctx.regions[vi].empty() ? nullptr : &ctx.regions[vi], view.view_id);
      const std::vector<uint8_t> confidence = cached_masks[vi].patch_mask(patch);

      if (config.coeff_seen > 0) {
        PatchLoss seen;
        if (config.global_fit) {
          // Image-level (w,q) from the cache; loss/grad with the fit frozen.
          seen.grad.assign(patch.pixel_count(), 0.0);
          if (cached_fit_ok[vi]) {
            std::vector<double> src, tgt;
            std::vector<uint8_t> src_valid, tgt_valid;
            gather_patch(provider_out.depth, patch, &src, &src_valid);
            gather_patch(rendered_depth, patch, &tgt, &tgt_valid);
            int idx = 0;
            for (int i = 0; i < patch.height; ++i)
              for (int j = 0; j < patch.width; ++j, ++idx) {
                if (!src_valid[idx] || !tgt_valid[idx] || !confidence[idx]) continue;
                const double residual =
                    cached_image_fits[vi].apply(src[idx]) - tgt[idx];
                seen.loss += std::abs(residual);
                seen.grad[idx] = -l1_sign(residual);
                ++seen.n_active;
              }
          } else {
            ++result.degenerate_fit_skips;
          }
        } else {
          seen = loss_seen(provider_out.depth, rendered_depth, patch, confidence);
          if (seen.degenerate) ++result.degenerate_fit_skips;
          if (seen.fit && seen.fit->scale < 0) ++result.negative_scale_fits;
        }
        if (seen.n_active > 0) {
          seen_value = seen.loss / seen.n_active;
          int idx = 0;
          for (int i = 0; i < patch.height; ++i)
            for (int j = 0; j < patch.width; ++j, ++idx) {
              const double up =
                  config.coeff_seen * seen.grad[idx] / seen.n_active;
              if (up == 0.0) continue;
              // Chain through z = cosine * ray-distance.
              render_ray_backward(field, rendered.rays[idx],
                                  rendered.results[idx], Vec3::Zero(),
                                  up * rendered.cosine.at(i, j), 0.0,
                                  &field_grads);
            }
        }
        check_finite(seen_value, step, "loss_seen");
        result.loss_log.push_back({step, "seen", seen_value});
      }

      if (provider_on && step >= provider_warmup) {
        CorrectionGradients provider_grads(provider.correction());
        std::vector<double> d_provider(
            static_cast<size_t>(view.height()) * view.width(), 0.0);
        if (config.coeff_mde > 0) {
          DepthMap mde_target = rendered_depth;
          for (int i = 0; i < patch.height; ++i)
            for (int j = 0; j < patch.width; ++j)
              if (rendered.opacity.at(i, j) < config.mde_opacity_threshold)
                mde_target.validity.at(patch.pixel_y(i), patch.pixel_x(j)) = 0;
          PatchLoss mde =
              loss_mde(mde_target, provider_out.depth, patch, confidence);
          if (mde.degenerate) ++result.degenerate_fit_skips;
          if (mde.n_active > 0) {
            mde_value = mde.loss / mde.n_active;
            int idx = 0;
            for (int i = 0; i < patch.height; ++i)
              for (int j = 0; j < patch.width; ++j, ++idx)
                d_provider[static_cast<size_t>(patch.pixel_y(i)) * view.width() +
                           patch.pixel_x(j)] +=
                    config.coeff_mde * mde.grad[idx] / mde.n_active;
          }
          check_finite(mde_value, step, "loss_mde");
          result.loss_log.push_back({step, "mde", mde_value});
        }
        if (config.coeff_reg > 0) {
          PatchLoss reg = loss_reg(initial_maps[vi], provider_out.depth, patch);
          if (reg.degenerate) ++result.degenerate_fit_skips;
          if (reg.n_active > 0) {
            reg_value = reg.loss / reg.n_active;
            int idx = 0;
            for (int i = 0; i < patch.height; ++i)
              for (int j = 0; j < patch.width; ++j, ++idx)
                d_provider[static_cast<size_t>(patch.pixel_y(i)) * view.width() +
                           patch.pixel_x(j)] +=
                    config.coeff_reg * reg.grad[idx] / reg.n_active;
          }
          check_finite(reg_value, step, "loss_reg");
          result.loss_log.push_back({step, "reg", reg_value});
        }
        provider.backprop(provider_out, d_provider, &provider_grads);
        adapt_step(provider, provider_grads, provider_opt, config.lr_provider);
      } else if (provider_on) {
        // Warm-up: keep the per-step log shape without adapting.
        if (config.coeff_mde > 0) result.loss_log.push_back({step, "mde", 0.0});
        if (config.coeff_reg > 0) result.loss_log.push_back({step, "reg", 0.0});
      }
    }

    // --- Phase 3: unseen-view distillation after warm-up ---
    if (config.coeff_unseen > 0) {
      double unseen_value = 0.0;
      if (step >= unseen_warmup) {
        const CameraView unseen = sample_unseen_view(views, unseen_rng);
        const int span =
            config.unseen_patch_stride * (config.unseen_patch_size - 1) + 1;
        PatchSpec patch;
        patch.height = patch.width = config.unseen_patch_size;
        patch.stride = config.unseen_patch_stride;
        patch.origin_y =
            std::uniform_int_distribution<int>(0, unseen.height() - span)(unseen_rng);
        patch.origin_x =
            std::uniform_int_distribution<int>(0, unseen.width() - span)(unseen_rng);

        PatchRender rendered = render_patch(field, unseen, patch,
                                            config.n_samples_per_ray, ctx.t_near,
                                            ctx.t_far);
        DepthMap rendered_depth(unseen.height(), unseen.width(),
                                DepthFrame::kAbsolute);
        std::fill(rendered_depth.validity.raw().begin(),
                  rendered_depth.validity.raw().end(), 0);
        ImageRgb rendered_image(unseen.height(), unseen.width(), 3);
        for (int i = 0; i < patch.height; ++i)
          for (int j = 0; j < patch.width; ++j) {
            rendered_depth.at(patch.pixel_y(i), patch.pixel_x(j)) =
                rendered.depth.at(i, j);
            rendered_depth.validity.at(patch.pixel_y(i), patch.pixel_x(j)) =
                rendered.opacity.at(i, j) >= config.opacity_threshold ? 1 : 0;
            for (int c = 0; c < 3; ++c)
              rendered_image.at(patch.pixel_y(i), patch.pixel_x(j), c) =
                  rendered.color.at(i, j, c);
          }

        // Provider backdoor for the novel pose: traced scene depth when the
        // scene is known, otherwise the rendering's own depth.
        DepthMap backdoor = rendered_depth;
        std::vector<int> unseen_regions;
        if (ctx.scene) {
          const CameraView traced = trace_scene(
              *ctx.scene, unseen.intrinsics, unseen.rotation, unseen.translation,
              unseen.height(), unseen.width(), -1);
          backdoor = *traced.gt_depth;
          unseen_regions = region_map(*ctx.scene, unseen);
        }
        const DepthMap provider_depth = provider.predict(
            rendered_image, backdoor,
            unseen_regions.empty() ? nullptr : &unseen_regions, -1);

        const size_t nearest = nearest_seen_view(unseen.translation, views);
        const ConfidenceMask mask = build_mask_unseen(
            provider_depth, rendered_depth, cached_depths[nearest],
            unseen.intrinsics, RelativePose::between(unseen, views[nearest]),
            ctx.tau, -1, views[nearest].view_id);
        if (mask.degenerate_fit) ++result.degenerate_fit_skips;

        PatchLoss unseen_loss = loss_unseen(provider_depth, rendered_depth, patch,
                                            mask.patch_mask(patch));
        if (unseen_loss.degenerate) ++result.degenerate_fit_skips;
        if (unseen_loss.n_active > 0) {
          unseen_value = unseen_loss.loss / unseen_loss.n_active;
          int idx = 0;
          for (int i = 0; i < patch.height; ++i)
            for (int j = 0; j < patch.width; ++j, ++idx) {
              const double up =
                  config.coeff_unseen * unseen_loss.grad[idx] / unseen_loss.n_active;
              if (up == 0.0) continue;
              render_ray_backward(field, rendered.rays[idx], rendered.results[idx],
                                  Vec3::Zero(), up * rendered.cosine.at(i, j),
                                  0.0, &field_grads);
            }
        }
        check_finite(unseen_value, step, "loss_unseen");
      }
      result.loss_log.push_back({step, "unseen", unseen_value});
    }

    density_opt.step(field.density_raw(), field_grads.density, lr_field);
    color_opt.step(field.color_raw(), field_grads.color, lr_field);
  }

  result.provider = std::move(provider);
  return result;
}

}  // namespace mdnerf
