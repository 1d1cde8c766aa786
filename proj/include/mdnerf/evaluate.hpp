#pragma once

#include <string>
#include <vector>

#include "mdnerf/field.hpp"
#include "mdnerf/metrics.hpp"
#include "mdnerf/trainer.hpp"

namespace mdnerf {

struct EvaluationReport {
  std::string scene;
  int n_views = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double scale_factor_s = 1.0;

  std::string csv_header() const {
    return "scene,views,psnr,ssim,abs_rel,sq_rel,rmse,rmse_log,s";
  }
  std::string csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                  scene.c_str(), n_views, psnr, ssim, abs_rel, sq_rel, rmse,
                  rmse_log, scale_factor_s);
    return buf;
  }
};

// Renders every view and scores color against the dataset images and depth
// against ground truth, with scene-level median scaling of the predictions.
inline EvaluationReport evaluate_field(const RadianceFieldGrid& field,
                                       const std::vector<CameraView>& views,
                                       int n_samples, double t_near, double t_far,
                                       double opacity_threshold = 0.5,
                                       const std::string& scene_name = "scene",
                                       int threads = 1) {
  if (views.empty()) throw ArgumentError("evaluate_field: no views");
  EvaluationReport report;
  report.scene = scene_name;
  report.n_views = static_cast<int>(views.size());

  std::vector<DepthMap> predictions, gts;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& view : views) {
    ImageRgb rendered(view.height(), view.width(), 3);
    DepthMap depth(view.height(), view.width(), DepthFrame::kAbsolute);
    detail::parallel_chunks(view.height(), threads, [&](long y0, long y1, int) {
      for (long y = y0; y < y1; ++y)
        for (int x = 0; x < view.width(); ++x) {
          const Ray ray =
              pixel_ray(view, x, static_cast<double>(y), t_near, t_far);
          const RenderResult r = render_ray(field, ray, n_samples);
          const Vec3 color = r.composited(field.background());
          for (int c = 0; c < 3; ++c)
            rendered.at(static_cast<int>(y), x, c) = std::clamp(color[c], 0.0, 1.0);
          depth.at(static_cast<int>(y), x) =
              r.depth * depth_axis_cosine(view, x, static_cast<double>(y));
          depth.validity.at(static_cast<int>(y), x) =
              r.opacity >= opacity_threshold ? 1 : 0;
        }
    });
    psnr_sum += std::min(psnr(rendered, view.image), 99.0);
    ssim_sum += ssim(rendered, view.image);
    if (view.gt_depth) {
      predictions.push_back(std::move(depth));
      gts.push_back(*view.gt_depth);
    }
  }
  report.psnr = psnr_sum / views.size();
  report.ssim = ssim_sum / views.size();

  if (!predictions.empty()) {
    report.scale_factor_s = median_scale(predictions, gts);
    double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
    int counted = 0;
    for (size_t v = 0; v < predictions.size(); ++v) {
      const DepthMetricReport m =
          depth_metrics(scaled(predictions[v], report.scale_factor_s), gts[v]);
      abs_rel += m.abs_rel;
      sq_rel += m.sq_rel;
      rmse += m.rmse;
      rmse_log += m.rmse_log;
      ++counted;
    }
    report.abs_rel = abs_rel / counted;
    report.sq_rel = sq_rel / counted;
    report.rmse = rmse / counted;
    report.rmse_log = rmse_log / counted;
  }
  return report;
}

}  // namespace mdnerf
