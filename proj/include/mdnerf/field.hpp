#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "mdnerf/camera.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"
#include "mdnerf/scene.hpp"

namespace mdnerf {

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct FieldSample {
  double sigma = 0.0;
  Vec3 color = Vec3::Zero();
};

// Dense voxel grid of raw (pre-activation) density and color parameters.
// Node index is x-fastest: idx = x + nx*(y + ny*z).
class RadianceFieldGrid {
 public:
  RadianceFieldGrid() = default;
  RadianceFieldGrid(int nx, int ny, int nz, const Aabb& bounds,
                    const Vec3& background = Vec3::Zero(),
                    double density_init = -2.0, double color_init = 0.0)
      : nx_(nx), ny_(ny), nz_(nz), bounds_(bounds), background_(background),
        density_raw_(static_cast<size_t>(nx) * ny * nz, density_init),
        color_raw_(static_cast<size_t>(nx) * ny * nz * 3, color_init) {
    if (nx < 2 || ny < 2 || nz < 2)
      throw ArgumentError("RadianceFieldGrid: resolution must be >= 2 per axis");
    if ((bounds.max.array() <= bounds.min.array()).any())
      throw ArgumentError("RadianceFieldGrid: degenerate bounds");
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  const Aabb& bounds() const { return bounds_; }
  const Vec3& background() const { return background_; }
  void set_background(const Vec3& bg) { background_ = bg; }

  size_t node_count() const { return density_raw_.size(); }
  size_t node_index(int x, int y, int z) const {
    return static_cast<size_t>(x) +
           static_cast<size_t>(nx_) * (static_cast<size_t>(y) +
                                       static_cast<size_t>(ny_) * z);
  }

  std::vector<double>& density_raw() { return density_raw_; }
  const std::vector<double>& density_raw() const { return density_raw_; }
  std::vector<double>& color_raw() { return color_raw_; }
  const std::vector<double>& color_raw() const { return color_raw_; }

  struct QueryDetail {
    bool inside = false;
    double sigma = 0.0;
    Vec3 color = Vec3::Zero();
    double raw_sigma = 0.0;
    Vec3 raw_color = Vec3::Zero();
    size_t corner[8] = {};
    double weight[8] = {};
  };

  QueryDetail query_detail(const Vec3& pos) const {
    if (!pos.allFinite())
      throw ArgumentError("query: non-finite position");
    QueryDetail detail;
    if (!bounds_.contains(pos)) {
      detail.color = background_;
      return detail;
    }
    detail.inside = true;
    const Vec3 extent = bounds_.extent();
    const double gx = (pos.x() - bounds_.min.x()) / extent.x() * (nx_ - 1);
    const double gy = (pos.y() - bounds_.min.y()) / extent.y() * (ny_ - 1);
    const double gz = (pos.z() - bounds_.min.z()) / extent.z() * (nz_ - 1);
    const int x0 = std::min(static_cast<int>(gx), nx_ - 2);
    const int y0 = std::min(static_cast<int>(gy), ny_ - 2);
    const int z0 = std::min(static_cast<int>(gz), nz_ - 2);
    const double fx = gx - x0, fy = gy - y0, fz = gz - z0;

    int slot = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx, ++slot) {
          detail.corner[slot] = node_index(x0 + dx, y0 + dy, z0 + dz);
          detail.weight[slot] = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) *
                                (dz ? fz : 1 - fz);
        }
    for (int s = 0; s < 8; ++s) {
      const size_t idx = detail.corner[s];
      const double w = detail.weight[s];
      detail.raw_sigma += w * density_raw_[idx];
      for (int c = 0; c < 3; ++c)
        detail.raw_color[c] += w * color_raw_[idx * 3 + c];
    }
    detail.sigma = softplus(detail.raw_sigma);
    for (int c = 0; c < 3; ++c) detail.color[c] = sigmoid(detail.raw_color[c]);
    return detail;
  }

  FieldSample query(const Vec3& pos) const {
    const QueryDetail detail = query_detail(pos);
    return {detail.sigma, detail.color};
  }

 private:
  int nx_ = 0, ny_ = 0, nz_ = 0;
  Aabb bounds_;
  Vec3 background_ = Vec3::Zero();
  std::vector<double> density_raw_;
  std::vector<double> color_raw_;
};

struct RenderResult {
  Vec3 color = Vec3::Zero();        // sum of w_k c_k, background excluded
  double depth = 0.0;               // sum of w_k t_k
  double opacity = 0.0;             // sum of w_k
  std::vector<double> weights;
  std::vector<double> ts;           // sample positions, kept for backward
  uint64_t jitter_seed = 0;         // 0 = deterministic midpoints

  Vec3 composited(const Vec3& background) const {
    return color + (1.0 - opacity) * background;
  }
};

// Stratified quadrature of Eq.-style alpha compositing. With no jitter the
// sample at stratum k sits at its midpoint.
inline RenderResult render_ray(const RadianceFieldGrid& grid, const Ray& ray,
                               int n_samples, std::mt19937_64* jitter = nullptr,
                               uint64_t jitter_seed = 0) {
  if (n_samples < 2) throw ArgumentError("render_ray: n_samples must be >= 2");
  RenderResult result;
  result.jitter_seed = jitter ? jitter_seed : 0;
  result.weights.resize(n_samples);
  result.ts.resize(n_samples);
  const double delta = (ray.t_far - ray.t_near) / n_samples;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int k = 0; k < n_samples; ++k) {
    const double offset = jitter ? uniform(*jitter) : 0.5;
    result.ts[k] = ray.t_near + (k + offset) * delta;
  }
  double transmittance = 1.0;
  for (int k = 0; k < n_samples; ++k) {
    const FieldSample sample =
        grid.query(ray.origin + result.ts[k] * ray.direction);
    const double alpha = -std::expm1(-sample.sigma * delta);
    const double weight = transmittance * alpha;
    result.weights[k] = weight;
    result.color += weight * sample.color;
    result.depth += weight * result.ts[k];
    result.opacity += weight;
    transmittance *= 1.0 - alpha;
  }
  return result;
}

struct GridGradients {
  std::vector<double> density;
  std::vector<double> color;

  explicit GridGradients(const RadianceFieldGrid& grid)
      : density(grid.node_count(), 0.0), color(grid.node_count() * 3, 0.0) {}
  void reset() {
    std::fill(density.begin(), density.end(), 0.0);
    std::fill(color.begin(), color.end(), 0.0);
  }
  void add(const GridGradients& other) {
    for (size_t i = 0; i < density.size(); ++i) density[i] += other.density[i];
    for (size_t i = 0; i < color.size(); ++i) color[i] += other.color[i];
  }
};

// Analytic gradients of the render_ray quadrature. Recomputes the forward
// pass from the cached sample positions, then sweeps back-to-front keeping
// suffix sums for the transmittance chain.
inline void render_ray_backward(const RadianceFieldGrid& grid, const Ray& ray,
                                const RenderResult& forward,
                                const Vec3& d_color, double d_depth,
                                double d_opacity, GridGradients* grads,
                                uint64_t expected_jitter_seed = 0) {
  if (forward.jitter_seed != expected_jitter_seed)
    throw ContractError("render_ray_backward: jitter seed mismatch with forward pass");
  const int n_samples = static_cast<int>(forward.ts.size());
  const double delta = (ray.t_far - ray.t_near) / n_samples;

  std::vector<RadianceFieldGrid::QueryDetail> details(n_samples);
  std::vector<double> alphas(n_samples);
  std::vector<double> trans(n_samples);  // T_k before sample k
  double transmittance = 1.0;
  for (int k = 0; k < n_samples; ++k) {
    details[k] = grid.query_detail(ray.origin + forward.ts[k] * ray.direction);
    alphas[k] = -std::expm1(-details[k].sigma * delta);
    trans[k] = transmittance;
    transmittance *= 1.0 - alphas[k];
  }

  // Suffix sums over j > k of w_j c_j, w_j t_j, w_j.
  Vec3 suffix_color = Vec3::Zero();
  double suffix_depth = 0.0;
  double suffix_weight = 0.0;
  for (int k = n_samples - 1; k >= 0; --k) {
    const auto& detail = details[k];
    const double weight = trans[k] * alphas[k];

    if (detail.inside) {
      // Color head: dC/dc_k = w_k.
      for (int c = 0; c < 3; ++c) {
        const double d_raw = d_color[c] * weight * detail.color[c] *
                             (1.0 - detail.color[c]);
        if (d_raw != 0.0)
          for (int s = 0; s < 8; ++s)
            grads->color[detail.corner[s] * 3 + c] += d_raw * detail.weight[s];
      }

      // Density head via alpha_k: own weight plus the suppressed suffix.
      const double one_minus_alpha = 1.0 - alphas[k];
      double d_alpha = d_color.dot(trans[k] * detail.color) +
                       d_depth * trans[k] * forward.ts[k] +
                       d_opacity * trans[k];
      if (one_minus_alpha > 1e-300)
        d_alpha -= (d_color.dot(suffix_color) + d_depth * suffix_depth +
                    d_opacity * suffix_weight) /
                   one_minus_alpha;
      const double d_sigma = d_alpha * delta * one_minus_alpha;
      const double d_raw_sigma = d_sigma * sigmoid(detail.raw_sigma);
      if (d_raw_sigma != 0.0)
        for (int s = 0; s < 8; ++s)
          grads->density[detail.corner[s]] += d_raw_sigma * detail.weight[s];
    }

    suffix_color += weight * detail.color;
    suffix_depth += weight * forward.ts[k];
    suffix_weight += weight;
  }
}

struct PatchRender {
  ImageRgb color;
  Image<double> depth;    // optical-axis (z) convention
  Image<double> opacity;
  Image<double> cosine;   // per-pixel ray-to-axis cosine (d z / d ray-distance)
  std::vector<Ray> rays;             // row-major over the patch lattice
  std::vector<RenderResult> results;
};

inline PatchRender render_patch(const RadianceFieldGrid& grid,
                                const CameraView& view, const PatchSpec& patch,
                                int n_samples, double t_near, double t_far,
                                std::mt19937_64* jitter = nullptr,
                                uint64_t jitter_seed = 0) {
  if (!patch.inside(view.height(), view.width()))
    throw ArgumentError("render_patch: patch outside image bounds");
  PatchRender out;
  out.color = ImageRgb(patch.height, patch.width, 3);
  out.depth = Image<double>(patch.height, patch.width, 1);
  out.opacity = Image<double>(patch.height, patch.width, 1);
  out.cosine = Image<double>(patch.height, patch.width, 1);
  out.rays.reserve(patch.pixel_count());
  out.results.reserve(patch.pixel_count());
  for (int i = 0; i < patch.height; ++i)
    for (int j = 0; j < patch.width; ++j) {
      const Ray ray =
          pixel_ray(view, patch.pixel_x(j), patch.pixel_y(i), t_near, t_far);
      RenderResult result = render_ray(grid, ray, n_samples, jitter, jitter_seed);
      const double cosine =
          depth_axis_cosine(view, patch.pixel_x(j), patch.pixel_y(i));
      for (int c = 0; c < 3; ++c) out.color.at(i, j, c) = result.color[c];
      out.depth.at(i, j) = result.depth * cosine;
      out.opacity.at(i, j) = result.opacity;
      out.cosine.at(i, j) = cosine;
      out.rays.push_back(ray);
      out.results.push_back(std::move(result));
    }
  return out;
}

// Renders the rendered-depth map of a full view, with validity gated on
// accumulated opacity.
inline DepthMap render_depth_map(const RadianceFieldGrid& grid,
                                 const CameraView& view, int n_samples,
                                 double t_near, double t_far,
                                 double opacity_threshold = 0.5) {
  DepthMap depth(view.height(), view.width(), DepthFrame::kAbsolute);
  for (int y = 0; y < view.height(); ++y)
    for (int x = 0; x < view.width(); ++x) {
      const Ray ray = pixel_ray(view, x, y, t_near, t_far);
      const RenderResult result = render_ray(grid, ray, n_samples);
      depth.at(y, x) = result.depth * depth_axis_cosine(view, x, y);
      depth.validity.at(y, x) = result.opacity >= opacity_threshold ? 1 : 0;
    }
  return depth;
}

// --- Checkpoint: magic "DARF", version, resolution, bounds + background as
// float64, then raw float32 parameter blocks, density first, x-fastest. ---

inline void save_field_checkpoint(const RadianceFieldGrid& grid,
                                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
  out.write("DARF", 4);
  const uint32_t version = 1;
  const uint32_t res[3] = {static_cast<uint32_t>(grid.nx()),
                           static_cast<uint32_t>(grid.ny()),
                           static_cast<uint32_t>(grid.nz())};
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(res), 12);
  const double header_f64[9] = {
      grid.bounds().min.x(), grid.bounds().min.y(), grid.bounds().min.z(),
      grid.bounds().max.x(), grid.bounds().max.y(), grid.bounds().max.z(),
      grid.background().x(), grid.background().y(), grid.background().z()};
  out.write(reinterpret_cast<const char*>(header_f64), sizeof(header_f64));
  auto write_block = [&out](const std::vector<double>& values) {
    std::vector<float> block(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * 4));
  };
  write_block(grid.density_raw());
  write_block(grid.color_raw());
}

inline RadianceFieldGrid load_field_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DARF", 4) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());
  uint32_t version = 0, res[3] = {};
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(res), 12);
  if (version != 1)
    throw FormatError("unsupported checkpoint version in " + path.string());
  double header_f64[9];
  in.read(reinterpret_cast<char*>(header_f64), sizeof(header_f64));
  if (!in) throw FormatError("truncated checkpoint header in " + path.string());
  Aabb bounds{Vec3(header_f64[0], header_f64[1], header_f64[2]),
              Vec3(header_f64[3], header_f64[4], header_f64[5])};
  RadianceFieldGrid grid(static_cast<int>(res[0]), static_cast<int>(res[1]),
                         static_cast<int>(res[2]), bounds,
                         Vec3(header_f64[6], header_f64[7], header_f64[8]));
  auto read_block = [&in, &path](std::vector<double>& values) {
    std::vector<float> block(values.size());
    in.read(reinterpret_cast<char*>(block.data()),
            static_cast<std::streamsize>(block.size() * 4));
    if (!in) throw FormatError("truncated parameter block in " + path.string());
    std::copy(block.begin(), block.end(), values.begin());
  };
  read_block(grid.density_raw());
  read_block(grid.color_raw());
  return grid;
}

}  // namespace mdnerf
