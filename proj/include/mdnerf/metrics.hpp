#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"

namespace mdnerf {

struct DepthMetricReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double scale_factor_s = 1.0;
  long n_pixels = 0;
  long n_excluded = 0;  // non-positive values where a ratio/log was needed
};

// Scene-level scaling factor: mean over views of the per-view median of
// elementwise gt/pred ratios over valid pixels.
inline double median_scale(const std::vector<DepthMap>& predictions,
                           const std::vector<DepthMap>& gts,
                           long* n_excluded = nullptr) {
  if (predictions.size() != gts.size() || predictions.empty())
    throw ArgumentError("median_scale: view count mismatch or empty");
  double sum_medians = 0.0;
  long excluded = 0;
  for (size_t v = 0; v < predictions.size(); ++v) {
    const DepthMap& pred = predictions[v];
    const DepthMap& gt = gts[v];
    if (pred.height() != gt.height() || pred.width() != gt.width())
      throw ArgumentError("median_scale: dimension mismatch");
    std::vector<double> ratios;
    for (int y = 0; y < pred.height(); ++y)
      for (int x = 0; x < pred.width(); ++x) {
        if (!pred.valid(y, x) || !gt.valid(y, x)) continue;
        if (pred.at(y, x) <= 0) {
          ++excluded;
          continue;
        }
        ratios.push_back(gt.at(y, x) / pred.at(y, x));
      }
    if (ratios.empty())
      throw ArgumentError("median_scale: empty valid-pixel overlap in a view");
    const size_t mid = ratios.size() / 2;
    std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
    double median = ratios[mid];
    if (ratios.size() % 2 == 0) {
      const double below =
          *std::max_element(ratios.begin(), ratios.begin() + mid);
      median = 0.5 * (median + below);
    }
    sum_medians += median;
  }
  if (n_excluded) *n_excluded = excluded;
  return sum_medians / static_cast<double>(predictions.size());
}

// AbsRel, SqRel, RMSE, RMSElog over valid pixels. The caller applies the
// scale factor to the predictions beforehand.
inline DepthMetricReport depth_metrics(const DepthMap& pred, const DepthMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ArgumentError("depth_metrics: dimension mismatch");
  DepthMetricReport report;
  double sum_abs_rel = 0, sum_sq_rel = 0, sum_sq = 0, sum_sq_log = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!pred.valid(y, x) || !gt.valid(y, x)) continue;
      const double p = pred.at(y, x);
      const double g = gt.at(y, x);
      if (p <= 0 || g <= 0) {
        ++report.n_excluded;
        continue;
      }
      const double err = std::abs(p - g);
      sum_abs_rel += err / g;
      sum_sq_rel += err * err / g;
      sum_sq += err * err;
      const double log_err = std::log(p) - std::log(g);
      sum_sq_log += log_err * log_err;
      ++report.n_pixels;
    }
  if (report.n_pixels == 0)
    throw ArgumentError("depth_metrics: no valid pixels");
  const double n = static_cast<double>(report.n_pixels);
  report.abs_rel = sum_abs_rel / n;
  report.sq_rel = sum_sq_rel / n;
  report.rmse = std::sqrt(sum_sq / n);
  report.rmse_log = std::sqrt(sum_sq_log / n);
  return report;
}

inline DepthMap scaled(const DepthMap& pred, double s) {
  DepthMap out = pred;
  for (double& v : out.values.raw()) v *= s;
  return out;
}

// PSNR over all channels; identical images give +infinity.
inline double psnr(const ImageRgb& a, const ImageRgb& b) {
  if (!a.same_shape(b)) throw ArgumentError("psnr: shape mismatch");
  double sum_sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = a.raw()[i] - b.raw()[i];
    sum_sq += diff * diff;
  }
  const double mse = sum_sq / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

namespace detail {
inline std::vector<double> gaussian_kernel_11(double sigma = 1.5) {
  std::vector<double> kernel(11);
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    kernel[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += kernel[i];
  }
  for (double& k : kernel) k /= sum;
  return kernel;
}
}  // namespace detail

// Mean structural similarity with an 11-tap Gaussian window (sigma 1.5),
// k1 = 0.01, k2 = 0.03, data range 1. Windows are evaluated where the full
// 11x11 support fits; multi-channel images average over channels.
inline double ssim(const ImageRgb& a, const ImageRgb& b) {
  if (!a.same_shape(b)) throw ArgumentError("ssim: shape mismatch");
  const int height = a.height(), width = a.width(), channels = a.channels();
  if (height < 11 || width < 11)
    throw ArgumentError("ssim: image smaller than the 11x11 window");
  const auto kernel = detail::gaussian_kernel_11();
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;

  double total = 0.0;
  long count = 0;
  for (int c = 0; c < channels; ++c) {
    for (int y = 5; y < height - 5; ++y)
      for (int x = 5; x < width - 5; ++x) {
        double mu_a = 0, mu_b = 0, sq_a = 0, sq_b = 0, prod = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            const double w = kernel[dy + 5] * kernel[dx + 5];
            const double va = a.at(y + dy, x + dx, c);
            const double vb = b.at(y + dy, x + dx, c);
            mu_a += w * va;
            mu_b += w * vb;
            sq_a += w * va * va;
            sq_b += w * vb * vb;
            prod += w * va * vb;
          }
        const double var_a = sq_a - mu_a * mu_a;
        const double var_b = sq_b - mu_b * mu_b;
        const double cov = prod - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                 ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

}  // namespace mdnerf
