#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "mdnerf/alignment.hpp"
#include "mdnerf/camera.hpp"
#include "mdnerf/optimizer.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"
#include "mdnerf/scene.hpp"

namespace mdnerf {

// Per-region (scale, shift) perturbation keyed by primitive index.
struct RegionAffine {
  double scale = 1.0;
  double shift = 0.0;
};

// Controls the synthetic stand-in for a monocular depth network. Distortions
// are applied in order: regional affine -> global affine -> convexity warp
// -> noise (composition does not commute).
struct AmbiguityOracleConfig {
  double global_scale = 1.0;
  double global_shift = 0.0;
  std::vector<RegionAffine> region_affines;  // indexed by primitive
  double convexity_warp = 0.0;  // amplitude a of d -> d + a*sin(pi*d/d_max)
  double warp_depth_max = 10.0;
  double noise_sigma = 0.0;
  uint64_t seed = 0;

  void check() const {
    if (global_scale <= 0)
      throw ArgumentError("AmbiguityOracleConfig: global_scale must be positive");
    if (noise_sigma < 0)
      throw ArgumentError("AmbiguityOracleConfig: noise_sigma must be >= 0");
    if (warp_depth_max <= 0)
      throw ArgumentError("AmbiguityOracleConfig: warp_depth_max must be positive");
    // Keeps d + a*sin(pi*d/d_max) strictly increasing.
    if (std::abs(convexity_warp) * M_PI / warp_depth_max >= 1.0)
      throw ArgumentError("AmbiguityOracleConfig: warp breaks monotonicity");
  }
};

// Trainable low-resolution grid of (log-scale, shift) corrections,
// bilinearly interpolated over the image.
class CorrectionField {
 public:
  CorrectionField() = default;
  CorrectionField(int rows, int cols)
      : rows_(rows), cols_(cols),
        log_scale_(static_cast<size_t>(rows) * cols, 0.0),
        shift_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 2 || cols < 2)
      throw ArgumentError("CorrectionField: needs >= 2 nodes per axis");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t node_count() const { return log_scale_.size(); }
  std::vector<double>& log_scale() { return log_scale_; }
  const std::vector<double>& log_scale() const { return log_scale_; }
  std::vector<double>& shift() { return shift_; }
  const std::vector<double>& shift() const { return shift_; }

  struct Interp {
    size_t node[4];
    double weight[4];
    double log_scale = 0.0;
    double shift = 0.0;
  };

  Interp interp_at(double v_frac, double u_frac) const {
    const double gy = v_frac * (rows_ - 1);
    const double gx = u_frac * (cols_ - 1);
    const int y0 = std::min(static_cast<int>(gy), rows_ - 2);
    const int x0 = std::min(static_cast<int>(gx), cols_ - 2);
    const double fy = gy - y0, fx = gx - x0;
    Interp out;
    int slot = 0;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx, ++slot) {
        out.node[slot] = static_cast<size_t>(y0 + dy) * cols_ + (x0 + dx);
        out.weight[slot] = (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
      }
    for (int s = 0; s < 4; ++s) {
      out.log_scale += out.weight[s] * log_scale_[out.node[s]];
      out.shift += out.weight[s] * shift_[out.node[s]];
    }
    return out;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> log_scale_;
  std::vector<double> shift_;
};

struct CorrectionGradients {
  std::vector<double> log_scale;
  std::vector<double> shift;

  explicit CorrectionGradients(const CorrectionField& field)
      : log_scale(field.node_count(), 0.0), shift(field.node_count(), 0.0) {}
  void reset() {
    std::fill(log_scale.begin(), log_scale.end(), 0.0);
    std::fill(shift.begin(), shift.end(), 0.0);
  }
  bool finite() const {
    for (double g : log_scale) if (!std::isfinite(g)) return false;
    for (double g : shift) if (!std::isfinite(g)) return false;
    return true;
  }
};

// Desk-scale stand-in for a monocular depth network: a frozen ambiguity
// oracle distorts the scene's true depth, and a trainable correction field
// is the adaptable half. A real-network adapter implementing predict()
// without the depth backdoor is the extension point.
class DepthProvider {
 public:
  DepthProvider() = default;
  DepthProvider(const AmbiguityOracleConfig& config, int correction_rows = 8,
                int correction_cols = 8)
      : config_(config), correction_(correction_rows, correction_cols) {
    config_.check();
  }

  const AmbiguityOracleConfig& config() const { return config_; }
  CorrectionField& correction() { return correction_; }
  const CorrectionField& correction() const { return correction_; }
  bool adapted() const { return adapted_; }

  // Oracle distortion of one true depth value; region = owning primitive
  // index (or -1 for background). Noise is added by the caller per pixel so
  // the per-value map stays deterministic.
  double oracle_value(double gt_depth, int region) const {
    double d = gt_depth;
    if (region >= 0 && region < static_cast<int>(config_.region_affines.size()))
      d = config_.region_affines[region].scale * d +
          config_.region_affines[region].shift;
    d = config_.global_scale * d + config_.global_shift;
    d += config_.convexity_warp * std::sin(M_PI * d / config_.warp_depth_max);
    return d;
  }

  struct PredictDetail {
    DepthMap depth;                              // relative frame
    std::vector<double> oracle_values;           // before correction, row-major
    std::vector<CorrectionField::Interp> interp;  // per pixel
  };

  // The provider "perceives" the scene through the ground-truth backdoor:
  // output = correction_field o ambiguity_oracle(gt_depth). The image
  // argument is accepted but deliberately ignored (input-noise invariance,
  // matching MDE's robustness to rendering artifacts).
  PredictDetail predict_detail(const ImageRgb& image, const DepthMap& gt_backdoor,
                               const std::vector<int>* regions = nullptr,
                               int view_tag = 0) const {
    if (image.height() != gt_backdoor.height() ||
        image.width() != gt_backdoor.width())
      throw ArgumentError("predict: image/backdoor dimension mismatch");
    const int height = gt_backdoor.height();
    const int width = gt_backdoor.width();
    PredictDetail out;
    out.depth = DepthMap(height, width, DepthFrame::kRelative);
    out.oracle_values.resize(static_cast<size_t>(height) * width, 0.0);
    out.interp.resize(static_cast<size_t>(height) * width);

    std::mt19937_64 rng(config_.seed ^ (0x9e3779b97f4a7c15ULL * (view_tag + 1)));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const size_t idx = static_cast<size_t>(y) * width + x;
        // Noise stream advances over all pixels for per-seed determinism.
        const double eps = config_.noise_sigma > 0
                               ? config_.noise_sigma * noise(rng)
                               : 0.0;
        if (!gt_backdoor.valid(y, x)) {
          out.depth.validity.at(y, x) = 0;
          continue;
        }
        const int region = regions ? (*regions)[idx] : -1;
        const double oracle = oracle_value(gt_backdoor.at(y, x), region) + eps;
        out.oracle_values[idx] = oracle;
        const auto interp = correction_.interp_at(
            height > 1 ? static_cast<double>(y) / (height - 1) : 0.0,
            width > 1 ? static_cast<double>(x) / (width - 1) : 0.0);
        out.interp[idx] = interp;
        out.depth.at(y, x) = std::exp(interp.log_scale) * oracle + interp.shift;
      }
    return out;
  }

  DepthMap predict(const ImageRgb& image, const DepthMap& gt_backdoor,
                   const std::vector<int>* regions = nullptr,
                   int view_tag = 0) const {
    return predict_detail(image, gt_backdoor, regions, view_tag).depth;
  }

  // Chains per-pixel output gradients into the correction-field parameters.
  void backprop(const PredictDetail& detail, const std::vector<double>& d_output,
                CorrectionGradients* grads) const {
    const int height = detail.depth.height();
    const int width = detail.depth.width();
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const size_t idx = static_cast<size_t>(y) * width + x;
        const double up = d_output[idx];
        if (up == 0.0 || !detail.depth.valid(y, x)) continue;
        const auto& interp = detail.interp[idx];
        const double scale = std::exp(interp.log_scale);
        for (int s = 0; s < 4; ++s) {
          grads->log_scale[interp.node[s]] +=
              up * interp.weight[s] * scale * detail.oracle_values[idx];
          grads->shift[interp.node[s]] += up * interp.weight[s];
        }
      }
  }

  void mark_adapted() { adapted_ = true; }

  // Frozen copies of the initial predictions, consumed by the smoothness
  // regularizer. Must precede any adaptation.
  std::vector<DepthMap> snapshot_initial(
      const std::vector<const CameraView*>& views,
      const std::vector<const std::vector<int>*>* regions = nullptr) const {
    if (adapted_)
      throw ContractError("snapshot_initial: provider already adapted");
    std::vector<DepthMap> out;
    for (size_t i = 0; i < views.size(); ++i) {
      if (!views[i]->gt_depth)
        throw ArgumentError("snapshot_initial: view lacks ground-truth depth");
      out.push_back(predict(views[i]->image, *views[i]->gt_depth,
                            regions ? (*regions)[i] : nullptr,
                            views[i]->view_id));
    }
    return out;
  }

 private:
  AmbiguityOracleConfig config_;
  CorrectionField correction_;
  bool adapted_ = false;
};

// Per-pixel owning-primitive index for a traced view (-1 on background),
// used to key the oracle's regional affines.
inline std::vector<int> region_map(const SceneSpec& spec, const CameraView& view) {
  std::vector<int> regions(static_cast<size_t>(view.height()) * view.width(), -1);
  const Mat3 k_inv = view.intrinsics.inverse();
  for (int y = 0; y < view.height(); ++y)
    for (int x = 0; x < view.width(); ++x) {
      const Vec3 dir_cam = (k_inv * Vec3(x + 0.5, y + 0.5, 1.0)).normalized();
      const auto hit =
          intersect_scene(spec, view.translation, view.rotation * dir_cam);
      if (hit) regions[static_cast<size_t>(y) * view.width() + x] = hit->primitive;
    }
  return regions;
}

struct ProviderOptimizer {
  AdamState log_scale_state;
  AdamState shift_state;

  explicit ProviderOptimizer(const DepthProvider& provider)
      : log_scale_state(provider.correction().node_count()),
        shift_state(provider.correction().node_count()) {}
};

// One adaptive-moment update of the correction field; the oracle config is
// frozen (the pretrained-trunk analogy). Refuses non-finite gradients.
inline void adapt_step(DepthProvider& provider, const CorrectionGradients& grads,
                       ProviderOptimizer& optimizer, double lr) {
  if (!grads.finite())
    throw NumericalError("adapt_step: non-finite gradients, update refused");
  optimizer.log_scale_state.step(provider.correction().log_scale(),
                                 grads.log_scale, lr);
  optimizer.shift_state.step(provider.correction().shift(), grads.shift, lr);
  provider.mark_adapted();
}

// Stock distorted provider for experiments: global affine, alternating
// per-region affines, and a mild convexity warp, all seed-perturbed.
// Provider whose error is the classic monocular ambiguity: a global scale
// and shift, a smooth depth-dependent warp, and per-pixel noise. All of it
// is either removable by scale-shift alignment or correctable by the
// trainable correction field, so this models the regime complementary
// training is designed for. Object-attached regional distortions (see
// make_distorted_provider) are deliberately absent: a single image-space
// correction grid shared across views cannot represent them.
inline DepthProvider make_scale_shift_provider(const SceneSpec& scene,
                                               uint64_t seed,
                                               double noise_sigma = 0.05) {
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  AmbiguityOracleConfig cfg;
  cfg.seed = seed;
  cfg.global_scale = 1.25 + jitter(rng);
  cfg.global_shift = 0.15 + jitter(rng);
  cfg.warp_depth_max = 2.0 * scene.bounds.diagonal();
  cfg.convexity_warp = 0.05 * scene.bounds.diagonal();
  cfg.noise_sigma = noise_sigma;
  return DepthProvider(cfg);
}

inline DepthProvider make_distorted_provider(const SceneSpec& scene,
                                             uint64_t seed,
                                             double noise_sigma = 0.0) {
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  AmbiguityOracleConfig cfg;
  cfg.seed = seed;
  cfg.global_scale = 1.25 + jitter(rng);
  cfg.global_shift = 0.15 + jitter(rng);
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    RegionAffine ra;
    ra.scale = (i % 2 == 0 ? 1.3 : 0.75) + jitter(rng);
    ra.shift = (i % 2 == 0 ? 0.25 : -0.2) + jitter(rng);
    cfg.region_affines.push_back(ra);
  }
  cfg.warp_depth_max = 2.0 * scene.bounds.diagonal();
  cfg.convexity_warp = 0.05 * scene.bounds.diagonal();
  cfg.noise_sigma = noise_sigma;
  return DepthProvider(cfg);
}

// --- Provider checkpoint: JSON config + float32 correction block ---

inline void save_provider_checkpoint(const DepthProvider& provider,
                                     const std::filesystem::path& path) {
  nlohmann::json j;
  const auto& cfg = provider.config();
  j["global_scale"] = cfg.global_scale;
  j["global_shift"] = cfg.global_shift;
  j["convexity_warp"] = cfg.convexity_warp;
  j["warp_depth_max"] = cfg.warp_depth_max;
  j["noise_sigma"] = cfg.noise_sigma;
  j["seed"] = cfg.seed;
  j["region_affines"] = nlohmann::json::array();
  for (const auto& ra : cfg.region_affines)
    j["region_affines"].push_back({ra.scale, ra.shift});
  j["correction_rows"] = provider.correction().rows();
  j["correction_cols"] = provider.correction().cols();
  const std::string header = j.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  const uint32_t header_size = static_cast<uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&header_size), 4);
  out.write(header.data(), header_size);
  auto write_block = [&out](const std::vector<double>& values) {
    std::vector<float> block(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * 4));
  };
  write_block(provider.correction().log_scale());
  write_block(provider.correction().shift());
}

inline DepthProvider load_provider_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  uint32_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), 4);
  std::string header(header_size, '\0');
  in.read(header.data(), header_size);
  if (!in) throw FormatError("truncated provider checkpoint: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed provider checkpoint header: " +
                      std::string(e.what()));
  }
  AmbiguityOracleConfig cfg;
  cfg.global_scale = j.at("global_scale").get<double>();
  cfg.global_shift = j.at("global_shift").get<double>();
  cfg.convexity_warp = j.at("convexity_warp").get<double>();
  cfg.warp_depth_max = j.at("warp_depth_max").get<double>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  for (const auto& ra : j.at("region_affines"))
    cfg.region_affines.push_back({ra.at(0).get<double>(), ra.at(1).get<double>()});
  DepthProvider provider(cfg, j.at("correction_rows").get<int>(),
                         j.at("correction_cols").get<int>());
  auto read_block = [&in, &path](std::vector<double>& values) {
    std::vector<float> block(values.size());
    in.read(reinterpret_cast<char*>(block.data()),
            static_cast<std::streamsize>(block.size() * 4));
    if (!in) throw FormatError("truncated correction block: " + path.string());
    std::copy(block.begin(), block.end(), values.begin());
  };
  read_block(provider.correction().log_scale());
  read_block(provider.correction().shift());
  return provider;
}

}  // namespace mdnerf
