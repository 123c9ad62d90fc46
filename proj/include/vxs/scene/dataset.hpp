#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vxs/core/error.hpp"
#include "vxs/core/tensor.hpp"
#include "vxs/io/image_io.hpp"
#include "vxs/render/camera.hpp"

namespace vxs {

/// RGB style image with its aligned depth map. Depth is used only through
/// min-max normalized features, so its absolute scale is free.
struct StylePair {
  Tensor rgb;    // [H,W,3] in [0,1]
  Tensor depth;  // [H,W]
};

struct SceneView {
  Tensor image;  // [H,W,3]
  Tensor depth;  // [H,W] ground-truth ray depth, synthetic scenes only
  bool has_depth = false;
  Camera camera;
};

struct SceneDataset {
  std::vector<SceneView> views;
  Vec3 bounds_min{-1, -1, -1};
  Vec3 bounds_max{1, 1, 1};
  Vec3 background{1, 1, 1};
  double near_hint = 0.0;
  double far_hint = 0.0;

  void validate() const {
    VXS_CHECK(!views.empty(), InvalidInput, "dataset has no views");
    const Camera& c0 = views.front().camera;
    for (const auto& v : views) {
      v.camera.validate();
      VXS_CHECK(v.camera.width == c0.width && v.camera.height == c0.height, InvalidInput,
                "dataset views must share image size");
      VXS_CHECK(v.image.ndim() == 3 && v.image.dim(0) == v.camera.height &&
                    v.image.dim(1) == v.camera.width && v.image.dim(2) == 3,
                InvalidInput, "view image size does not match camera");
    }
  }
};

namespace detail {

inline std::string frame_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d%s", prefix, i, ext);
  return buf;
}

}  // namespace detail

/// Writes images, depth sidecars and the cameras.json manifest.
inline void save_dataset(const SceneDataset& ds, const std::string& dir) {
  ds.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["version"] = 1;
  const Camera& c0 = ds.views.front().camera;
  j["intrinsics"] = {{"fx", c0.fx}, {"fy", c0.fy}, {"cx", c0.cx},
                     {"cy", c0.cy}, {"width", c0.width}, {"height", c0.height}};
  j["bounds"] = {{"min", {ds.bounds_min[0], ds.bounds_min[1], ds.bounds_min[2]}},
                 {"max", {ds.bounds_max[0], ds.bounds_max[1], ds.bounds_max[2]}}};
  j["background"] = {ds.background[0], ds.background[1], ds.background[2]};
  j["near"] = ds.near_hint;
  j["far"] = ds.far_hint;
  j["frames"] = nlohmann::json::array();
  for (size_t i = 0; i < ds.views.size(); ++i) {
    const auto& v = ds.views[i];
    std::string img_name = detail::frame_name("view", static_cast<int>(i), ".png");
    save_png_rgb8((fs::path(dir) / img_name).string(), v.image);
    nlohmann::json frame;
    frame["image"] = img_name;
    std::vector<double> tfm(12);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) tfm[size_t(r) * 4 + c] = v.camera.rotation[size_t(r) * 3 + c];
      tfm[size_t(r) * 4 + 3] = v.camera.position[size_t(r)];
    }
    frame["transform"] = tfm;
    if (v.has_depth) {
      double dmin = v.depth[0], dmax = v.depth[0];
      for (double d : v.depth.data) {
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
      }
      std::string d16 = detail::frame_name("depth", static_cast<int>(i), ".png");
      std::string draw = detail::frame_name("depth", static_cast<int>(i), ".f32");
      save_png_gray16((fs::path(dir) / d16).string(), v.depth, dmin, dmax);
      save_raw_f32((fs::path(dir) / draw).string(), v.depth);
      frame["depth_png"] = d16;
      frame["depth_raw"] = draw;
    }
    j["frames"].push_back(frame);
  }
  std::ofstream f(fs::path(dir) / "cameras.json");
  VXS_CHECK(f.good(), IoError, "cannot write cameras.json in " + dir);
  f << j.dump(2) << "\n";
}

inline SceneDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path manifest = fs::path(dir) / "cameras.json";
  std::ifstream f(manifest);
  VXS_CHECK(f.good(), IoError, "missing manifest: " + manifest.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed cameras.json: ") + e.what());
  }
  VXS_CHECK(j.value("version", 0) == 1, FormatError, "unsupported cameras.json version");

  SceneDataset ds;
  const auto& in = j.at("intrinsics");
  Camera base;
  base.fx = in.at("fx");
  base.fy = in.at("fy");
  base.cx = in.at("cx");
  base.cy = in.at("cy");
  base.width = in.at("width");
  base.height = in.at("height");
  if (j.contains("bounds")) {
    for (int k = 0; k < 3; ++k) {
      ds.bounds_min[size_t(k)] = j["bounds"]["min"][size_t(k)];
      ds.bounds_max[size_t(k)] = j["bounds"]["max"][size_t(k)];
    }
  }
  if (j.contains("background"))
    for (int k = 0; k < 3; ++k) ds.background[size_t(k)] = j["background"][size_t(k)];
  ds.near_hint = j.value("near", 0.0);
  ds.far_hint = j.value("far", 0.0);

  for (const auto& frame : j.at("frames")) {
    SceneView v;
    v.camera = base;
    const auto& tfm = frame.at("transform");
    VXS_CHECK(tfm.size() == 12, FormatError, "frame transform must have 12 entries");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) v.camera.rotation[size_t(r) * 3 + c] = tfm[size_t(r) * 4 + c];
      v.camera.position[size_t(r)] = tfm[size_t(r) * 4 + 3];
    }
    v.camera.validate();  // rejects non-orthonormal and det=-1 rotations
    v.image = load_png_rgb8((fs::path(dir) / frame.at("image").get<std::string>()).string());
    VXS_CHECK(v.image.dim(0) == base.height && v.image.dim(1) == base.width, InvalidInput,
              "image size mismatch in frame " + frame.at("image").get<std::string>());
    if (frame.contains("depth_raw")) {
      v.depth = load_raw_f32((fs::path(dir) / frame.at("depth_raw").get<std::string>()).string());
      v.has_depth = true;
    }
    ds.views.push_back(std::move(v));
  }
  ds.validate();
  return ds;
}

/// Loads an RGB style image and its depth map. Depth may be a 16-bit PNG or
/// a raw .f32 sidecar; a resolution mismatch is resolved by area-resampling
/// the depth to the RGB size (recorded in `warnings`).
inline StylePair load_style_pair(const std::string& rgb_path, const std::string& depth_path,
                                 std::vector<std::string>* warnings = nullptr) {
  namespace fs = std::filesystem;
  VXS_CHECK(fs::exists(rgb_path), IoError, "style RGB image not found: " + rgb_path);
  VXS_CHECK(fs::exists(depth_path), IoError,
            "style depth map not found: " + depth_path +
                " (a style depth input is required; supply a rendered or measured depth map)");
  StylePair sp;
  sp.rgb = load_png_rgb8(rgb_path);
  if (depth_path.size() >= 4 && depth_path.substr(depth_path.size() - 4) == ".f32")
    sp.depth = load_raw_f32(depth_path);
  else
    sp.depth = load_png_gray16(depth_path);
  if (sp.depth.dim(0) != sp.rgb.dim(0) || sp.depth.dim(1) != sp.rgb.dim(1)) {
    if (warnings)
      warnings->push_back("style depth resampled from " + std::to_string(sp.depth.dim(1)) + "x" +
                          std::to_string(sp.depth.dim(0)) + " to match RGB resolution");
    sp.depth = resample_area(sp.depth, sp.rgb.dim(0), sp.rgb.dim(1));
  }
  return sp;
}

}  // namespace vxs
