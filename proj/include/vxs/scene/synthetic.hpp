#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "vxs/core/error.hpp"
#include "vxs/core/rng.hpp"
#include "vxs/field/grid.hpp"
#include "vxs/render/renderer.hpp"
#include "vxs/scene/dataset.hpp"

namespace vxs {

/// Analytic primitive voxelized into the ground-truth field.
struct Primitive {
  enum class Kind { sphere, box };
  Kind kind = Kind::sphere;
  Vec3 center{0, 0, 0};
  Vec3 size{0.5, 0.5, 0.5};  // sphere: size[0] is the radius; box: half extents
  Vec3 albedo{0.8, 0.3, 0.3};
  Vec3 albedo2{0.3, 0.3, 0.8};
  // 0 flat, 1 checker (albedo/albedo2), 2 two-tone split at center.x,
  // 3 axis stripes
  int texture = 0;
  double texture_scale = 4.0;

  double sdf(const Vec3& p) const {
    if (kind == Kind::sphere) return norm(p - center) - size[0];
    Vec3 q{std::abs(p[0] - center[0]) - size[0], std::abs(p[1] - center[1]) - size[1],
           std::abs(p[2] - center[2]) - size[2]};
    Vec3 qp{std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
    return norm(qp) + std::min(std::max(q[0], std::max(q[1], q[2])), 0.0);
  }

  Vec3 shade(const Vec3& p) const {
    switch (texture) {
      case 1: {
        int par = static_cast<int>(std::floor(p[0] * texture_scale)) +
                  static_cast<int>(std::floor(p[1] * texture_scale)) +
                  static_cast<int>(std::floor(p[2] * texture_scale));
        return (par & 1) ? albedo2 : albedo;
      }
      case 2:
        return p[0] < center[0] ? albedo : albedo2;
      case 3: {
        int par = static_cast<int>(std::floor(p[1] * texture_scale));
        return (par & 1) ? albedo2 : albedo;
      }
      default:
        return albedo;
    }
  }
};

struct SyntheticSceneSpec {
  std::vector<Primitive> primitives;
  Vec3 background{1, 1, 1};
  std::array<int, 3> resolution{64, 64, 64};
  Vec3 bounds_min{-1, -1, -1};
  Vec3 bounds_max{1, 1, 1};
  int image_size = 64;
  uint64_t seed = 0;
  double max_density = 60.0;
  double shell_voxels = 1.5;  // falloff half-width in voxel units

  void validate() const {
    VXS_CHECK(!primitives.empty(), InvalidInput, "scene spec has no primitives");
    for (const auto& p : primitives) {
      for (int k = 0; k < 3; ++k) {
        VXS_CHECK(p.center[size_t(k)] >= bounds_min[size_t(k)] &&
                      p.center[size_t(k)] <= bounds_max[size_t(k)],
                  InvalidInput, "primitive center outside scene bounds");
        VXS_CHECK(p.albedo[size_t(k)] >= 0.0 && p.albedo[size_t(k)] <= 1.0 &&
                      p.albedo2[size_t(k)] >= 0.0 && p.albedo2[size_t(k)] <= 1.0,
                  InvalidInput, "albedo components must be in [0,1]");
      }
    }
  }
};

inline double inv_softplus(double y) {
  // log(exp(y) - 1), stable for large y
  if (y > 30.0) return y;
  VXS_CHECK(y > 0.0, InvalidInput, "inv_softplus needs y > 0");
  return y + std::log1p(-std::exp(-y));
}

inline double logit(double p) {
  p = std::min(1.0 - 1e-4, std::max(1e-4, p));
  return std::log(p / (1.0 - p));
}

/// Voxelize the primitives into a ground-truth field: hard interior density
/// with a smooth shell falloff, textured albedo inside, neutral gray outside.
inline RadianceField voxelize(const SyntheticSceneSpec& spec) {
  spec.validate();
  RadianceField::Options o;
  o.resolution = spec.resolution;
  o.bounds_min = {spec.bounds_min[0], spec.bounds_min[1], spec.bounds_min[2]};
  o.bounds_max = {spec.bounds_max[0], spec.bounds_max[1], spec.bounds_max[2]};
  RadianceField f = RadianceField::create(o);
  f.background = {spec.background[0], spec.background[1], spec.background[2]};

  auto cell = f.density.spec.cell_size();
  double w = spec.shell_voxels * (cell[0] + cell[1] + cell[2]) / 3.0;
  const auto& res = spec.resolution;
  for (int x = 0; x < res[0]; ++x)
    for (int y = 0; y < res[1]; ++y)
      for (int z = 0; z < res[2]; ++z) {
        auto pc = f.density.spec.voxel_center(x, y, z);
        Vec3 p{pc[0], pc[1], pc[2]};
        double best = std::numeric_limits<double>::infinity();
        const Primitive* nearest = nullptr;
        for (const auto& prim : spec.primitives) {
          double d = prim.sdf(p);
          if (d < best) {
            best = d;
            nearest = &prim;
          }
        }
        // occupancy ramp: 1 inside, 0 outside, linear across the shell
        double occ = std::min(1.0, std::max(0.0, 0.5 - best / w));
        double sigma = spec.max_density * occ;
        f.density.at(x, y, z, 0) =
            static_cast<float>(sigma > 1e-9 ? inv_softplus(sigma) : -30.0);
        if (best < w && nearest) {
          Vec3 alb = nearest->shade(p);
          for (int c = 0; c < 3; ++c)
            f.color.at(x, y, z, c) = static_cast<float>(logit(alb[size_t(c)]));
        }
      }
  return f;
}

/// Forward-facing camera arc around the +z side of the scene, all cameras
/// looking at the scene center.
inline std::vector<Camera> camera_arc(const SyntheticSceneSpec& spec, int n_views) {
  VXS_CHECK(n_views >= 1, InvalidInput, "need at least one view");
  Vec3 center = (spec.bounds_min + spec.bounds_max) * 0.5;
  double extent = norm(spec.bounds_max - spec.bounds_min) * 0.5;
  double dist = 2.4 * extent;
  double focal = 1.2 * spec.image_size;
  std::vector<Camera> cams;
  for (int i = 0; i < n_views; ++i) {
    double a = n_views == 1 ? 0.0 : -0.45 + 0.9 * i / (n_views - 1);  // radians
    Vec3 eye = center + Vec3{dist * std::sin(a), 0.25 * extent * std::sin(2.0 * a),
                             dist * std::cos(a)};
    cams.push_back(Camera::look_at(eye, center, {0, 1, 0}, focal, spec.image_size,
                                   spec.image_size));
  }
  return cams;
}

struct GeneratedScene {
  SceneDataset dataset;
  RadianceField field;  // ground-truth voxelization
};

/// Deterministic synthetic dataset: voxelized ground-truth field rendered
/// from a forward-facing arc, with per-view ground-truth depth.
inline GeneratedScene generate_scene(const SyntheticSceneSpec& spec, int n_views) {
  spec.validate();
  VXS_CHECK(n_views >= 1, InvalidInput, "generate_scene: n_views must be >= 1");
  GeneratedScene out;
  out.field = voxelize(spec);
  out.dataset.bounds_min = spec.bounds_min;
  out.dataset.bounds_max = spec.bounds_max;
  out.dataset.background = spec.background;
  RenderOptions opt;
  opt.n_samples = 192;
  opt.use_deformation = false;
  for (const Camera& cam : camera_arc(spec, n_views)) {
    ViewRender r = render_view(out.field, cam, opt);
    SceneView v;
    v.camera = cam;
    v.image = r.rgb;
    v.depth = r.depth;
    v.has_depth = true;
    out.dataset.views.push_back(std::move(v));
  }
  return out;
}

// JSON round trip for scene specs (CLI input format).

inline void to_json(nlohmann::json& j, const Primitive& p) {
  j = {{"kind", p.kind == Primitive::Kind::sphere ? "sphere" : "box"},
       {"center", {p.center[0], p.center[1], p.center[2]}},
       {"size", {p.size[0], p.size[1], p.size[2]}},
       {"albedo", {p.albedo[0], p.albedo[1], p.albedo[2]}},
       {"albedo2", {p.albedo2[0], p.albedo2[1], p.albedo2[2]}},
       {"texture", p.texture},
       {"texture_scale", p.texture_scale}};
}

inline void from_json(const nlohmann::json& j, Primitive& p) {
  std::string kind = j.value("kind", "sphere");
  VXS_CHECK(kind == "sphere" || kind == "box", FormatError, "unknown primitive kind: " + kind);
  p.kind = kind == "sphere" ? Primitive::Kind::sphere : Primitive::Kind::box;
  auto vec = [&](const char* key, Vec3 dflt) {
    if (!j.contains(key)) return dflt;
    return Vec3{j[key][0], j[key][1], j[key][2]};
  };
  p.center = vec("center", {0, 0, 0});
  p.size = vec("size", {0.5, 0.5, 0.5});
  p.albedo = vec("albedo", {0.8, 0.3, 0.3});
  p.albedo2 = vec("albedo2", {0.3, 0.3, 0.8});
  p.texture = j.value("texture", 0);
  p.texture_scale = j.value("texture_scale", 4.0);
}

inline void to_json(nlohmann::json& j, const SyntheticSceneSpec& s) {
  j = {{"primitives", s.primitives},
       {"background", {s.background[0], s.background[1], s.background[2]}},
       {"resolution", {s.resolution[0], s.resolution[1], s.resolution[2]}},
       {"bounds_min", {s.bounds_min[0], s.bounds_min[1], s.bounds_min[2]}},
       {"bounds_max", {s.bounds_max[0], s.bounds_max[1], s.bounds_max[2]}},
       {"image_size", s.image_size},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSceneSpec& s) {
  s.primitives = j.value("primitives", std::vector<Primitive>{});
  if (j.contains("background"))
    for (int k = 0; k < 3; ++k) s.background[size_t(k)] = j["background"][size_t(k)];
  if (j.contains("resolution"))
    for (int k = 0; k < 3; ++k) s.resolution[size_t(k)] = j["resolution"][size_t(k)];
  if (j.contains("bounds_min"))
    for (int k = 0; k < 3; ++k) s.bounds_min[size_t(k)] = j["bounds_min"][size_t(k)];
  if (j.contains("bounds_max"))
    for (int k = 0; k < 3; ++k) s.bounds_max[size_t(k)] = j["bounds_max"][size_t(k)];
  s.image_size = j.value("image_size", 64);
  s.seed = j.value("seed", uint64_t(0));
}

}  // namespace vxs
