#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdnerf/camera.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/image.hpp"
#include "mdnerf/scene.hpp"

namespace mdnerf {
namespace io {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// --- PPM (binary P6, maxval 255) ---

inline void save_ppm(const fs::path& path, const ImageRgb& image) {
  std::string bytes = "P6\n" + std::to_string(image.width()) + " " +
                      std::to_string(image.height()) + "\n255\n";
  bytes.reserve(bytes.size() + image.size());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        bytes.push_back(static_cast<char>(
            static_cast<uint8_t>(std::lround(v * 255.0))));
      }
  write_file(path, bytes);
}

namespace detail {
// Reads one whitespace-delimited token, skipping '#' comments.
inline std::string next_token(const std::string& bytes, size_t* pos,
                              const fs::path& path) {
  while (*pos < bytes.size()) {
    if (std::isspace(static_cast<unsigned char>(bytes[*pos]))) {
      ++*pos;
    } else if (bytes[*pos] == '#') {
      while (*pos < bytes.size() && bytes[*pos] != '\n') ++*pos;
    } else {
      break;
    }
  }
  size_t start = *pos;
  while (*pos < bytes.size() &&
         !std::isspace(static_cast<unsigned char>(bytes[*pos])))
    ++*pos;
  if (start == *pos)
    throw FormatError("truncated header in " + path.string());
  return bytes.substr(start, *pos - start);
}
}  // namespace detail

inline ImageRgb load_ppm(const fs::path& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  if (detail::next_token(bytes, &pos, path) != "P6")
    throw FormatError("not a P6 PPM: " + path.string());
  const int width = std::stoi(detail::next_token(bytes, &pos, path));
  const int height = std::stoi(detail::next_token(bytes, &pos, path));
  const int maxval = std::stoi(detail::next_token(bytes, &pos, path));
  if (maxval != 255) throw FormatError("unsupported maxval in " + path.string());
  ++pos;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(width) * height * 3;
  if (bytes.size() - pos < need)
    throw FormatError("truncated pixel data in " + path.string());
  ImageRgb image(height, width, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(y, x, c) =
            static_cast<uint8_t>(bytes[pos++]) / 255.0;
  return image;
}

// --- PFM (grayscale Pf, scale -1.0 => little-endian, bottom-up scanlines) ---

inline void save_pfm(const fs::path& path, const Image<double>& values) {
  std::string bytes = "Pf\n" + std::to_string(values.width()) + " " +
                      std::to_string(values.height()) + "\n-1.0\n";
  for (int y = values.height() - 1; y >= 0; --y)
    for (int x = 0; x < values.width(); ++x) {
      const float v = static_cast<float>(values.at(y, x));
      char buf[4];
      std::memcpy(buf, &v, 4);
      bytes.append(buf, 4);
    }
  write_file(path, bytes);
}

inline Image<double> load_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  if (detail::next_token(bytes, &pos, path) != "Pf")
    throw FormatError("not a grayscale PFM: " + path.string());
  const int width = std::stoi(detail::next_token(bytes, &pos, path));
  const int height = std::stoi(detail::next_token(bytes, &pos, path));
  const double scale = std::stod(detail::next_token(bytes, &pos, path));
  if (scale >= 0)
    throw FormatError("big-endian PFM not supported: " + path.string());
  ++pos;
  const size_t need = static_cast<size_t>(width) * height * 4;
  if (bytes.size() - pos < need)
    throw FormatError("truncated PFM data in " + path.string());
  Image<double> values(height, width, 1);
  for (int y = height - 1; y >= 0; --y)
    for (int x = 0; x < width; ++x) {
      float v;
      std::memcpy(&v, bytes.data() + pos, 4);
      pos += 4;
      values.at(y, x) = v;
    }
  return values;
}

// --- PBM (binary P4, rows packed MSB-first, 1 = valid) ---

inline void save_pbm(const fs::path& path, const Image<uint8_t>& mask) {
  std::string bytes = "P4\n" + std::to_string(mask.width()) + " " +
                      std::to_string(mask.height()) + "\n";
  for (int y = 0; y < mask.height(); ++y) {
    uint8_t byte = 0;
    int nbits = 0;
    for (int x = 0; x < mask.width(); ++x) {
      byte = static_cast<uint8_t>((byte << 1) | (mask.at(y, x) ? 1 : 0));
      if (++nbits == 8) {
        bytes.push_back(static_cast<char>(byte));
        byte = 0;
        nbits = 0;
      }
    }
    if (nbits > 0)
      bytes.push_back(static_cast<char>(byte << (8 - nbits)));
  }
  write_file(path, bytes);
}

inline Image<uint8_t> load_pbm(const fs::path& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  if (detail::next_token(bytes, &pos, path) != "P4")
    throw FormatError("not a P4 PBM: " + path.string());
  const int width = std::stoi(detail::next_token(bytes, &pos, path));
  const int height = std::stoi(detail::next_token(bytes, &pos, path));
  ++pos;
  const size_t row_bytes = (static_cast<size_t>(width) + 7) / 8;
  if (bytes.size() - pos < row_bytes * height)
    throw FormatError("truncated PBM data in " + path.string());
  Image<uint8_t> mask(height, width, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const uint8_t byte =
          static_cast<uint8_t>(bytes[pos + y * row_bytes + x / 8]);
      mask.at(y, x) = (byte >> (7 - x % 8)) & 1;
    }
  }
  return mask;
}

// --- Dataset directory ---
//
// views.json: array of {view_id, K (9, row-major), R (9, row-major), t (3),
// width, height}; per view color_<id>.ppm, depth_<id>.pfm, mask_<id>.pbm.

inline nlohmann::json scene_to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["background"] = {spec.background_color.x(), spec.background_color.y(),
                     spec.background_color.z()};
  j["bounds_min"] = {spec.bounds.min.x(), spec.bounds.min.y(), spec.bounds.min.z()};
  j["bounds_max"] = {spec.bounds.max.x(), spec.bounds.max.y(), spec.bounds.max.z()};
  j["primitives"] = nlohmann::json::array();
  for (const auto& prim : spec.primitives) {
    nlohmann::json p;
    p["kind"] = prim.kind == PrimitiveKind::kSphere  ? "sphere"
                : prim.kind == PrimitiveKind::kBox   ? "box"
                                                     : "plane";
    p["center"] = {prim.center.x(), prim.center.y(), prim.center.z()};
    p["size"] = {prim.size.x(), prim.size.y(), prim.size.z()};
    p["albedo"] = {prim.albedo.x(), prim.albedo.y(), prim.albedo.z()};
    j["primitives"].push_back(p);
  }
  return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  spec.seed = j.at("seed").get<uint64_t>();
  auto vec3 = [](const nlohmann::json& a) {
    return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
  };
  spec.background_color = vec3(j.at("background"));
  spec.bounds.min = vec3(j.at("bounds_min"));
  spec.bounds.max = vec3(j.at("bounds_max"));
  for (const auto& p : j.at("primitives")) {
    ScenePrimitive prim;
    const std::string kind = p.at("kind").get<std::string>();
    prim.kind = kind == "sphere" ? PrimitiveKind::kSphere
                : kind == "box"  ? PrimitiveKind::kBox
                                 : PrimitiveKind::kPlane;
    prim.center = vec3(p.at("center"));
    prim.size = vec3(p.at("size"));
    prim.albedo = vec3(p.at("albedo"));
    spec.primitives.push_back(prim);
  }
  spec.check();
  return spec;
}

inline void save_dataset(const std::vector<CameraView>& views, const fs::path& dir,
                         const SceneSpec* scene = nullptr) {
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& view : views) {
    nlohmann::json entry;
    entry["view_id"] = view.view_id;
    std::vector<double> k(9), r(9);
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) {
        k[row * 3 + col] = view.intrinsics(row, col);
        r[row * 3 + col] = view.rotation(row, col);
      }
    entry["K"] = k;
    entry["R"] = r;
    entry["t"] = {view.translation.x(), view.translation.y(), view.translation.z()};
    entry["width"] = view.width();
    entry["height"] = view.height();
    index.push_back(entry);

    const std::string id = std::to_string(view.view_id);
    save_ppm(dir / ("color_" + id + ".ppm"), view.image);
    if (view.gt_depth) {
      save_pfm(dir / ("depth_" + id + ".pfm"), view.gt_depth->values);
      save_pbm(dir / ("mask_" + id + ".pbm"), view.gt_depth->validity);
    }
  }
  std::ofstream out(dir / "views.json");
  out << index.dump(2) << "\n";
  if (scene) {
    std::ofstream sout(dir / "scene.json");
    sout << scene_to_json(*scene).dump(2) << "\n";
  }
}

inline std::vector<CameraView> load_dataset(const fs::path& dir) {
  const fs::path index_path = dir / "views.json";
  if (!fs::exists(index_path))
    throw FormatError("missing views.json in " + dir.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_file(index_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed views.json in " + dir.string() + ": " + e.what());
  }

  std::vector<CameraView> views;
  for (const auto& entry : index) {
    CameraView view;
    try {
      view.view_id = entry.at("view_id").get<int>();
      const auto k = entry.at("K").get<std::vector<double>>();
      const auto r = entry.at("R").get<std::vector<double>>();
      const auto t = entry.at("t").get<std::vector<double>>();
      if (k.size() != 9 || r.size() != 9 || t.size() != 3)
        throw FormatError("views.json: bad matrix sizes for view " +
                          std::to_string(view.view_id));
      for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) {
          view.intrinsics(row, col) = k[row * 3 + col];
          view.rotation(row, col) = r[row * 3 + col];
        }
      view.translation = Vec3(t[0], t[1], t[2]);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("views.json: missing pose entry: " + std::string(e.what()));
    }
    const std::string id = std::to_string(view.view_id);
    const fs::path color_path = dir / ("color_" + id + ".ppm");
    if (!fs::exists(color_path))
      throw FormatError("view " + id + " listed in views.json but " +
                        color_path.string() + " is missing");
    view.image = load_ppm(color_path);

    const int width = entry.at("width").get<int>();
    const int height = entry.at("height").get<int>();
    if (view.image.width() != width || view.image.height() != height)
      throw FormatError("dimension mismatch between views.json and " +
                        color_path.string());

    const fs::path depth_path = dir / ("depth_" + id + ".pfm");
    if (fs::exists(depth_path)) {
      DepthMap depth(height, width, DepthFrame::kAbsolute);
      depth.values = load_pfm(depth_path);
      if (depth.values.width() != width || depth.values.height() != height)
        throw FormatError("dimension mismatch between " + color_path.string() +
                          " and " + depth_path.string());
      const fs::path mask_path = dir / ("mask_" + id + ".pbm");
      if (fs::exists(mask_path)) {
        depth.validity = load_pbm(mask_path);
        if (depth.validity.width() != width || depth.validity.height() != height)
          throw FormatError("dimension mismatch in " + mask_path.string());
      }
      view.gt_depth = std::move(depth);
    }
    view.check();
    views.push_back(std::move(view));
  }
  return views;
}

inline std::optional<SceneSpec> load_scene_spec(const fs::path& dir) {
  const fs::path path = dir / "scene.json";
  if (!fs::exists(path)) return std::nullopt;
  return scene_from_json(nlohmann::json::parse(read_file(path)));
}

}  // namespace io
}  // namespace mdnerf
