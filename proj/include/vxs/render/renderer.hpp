#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "vxs/core/autodiff.hpp"
#include "vxs/core/rng.hpp"
#include "vxs/field/grid.hpp"
#include "vxs/render/camera.hpp"

namespace vxs {

// ---------------------------------------------------------------------------
// Compositing ops (emission-absorption model)

/// Compositing weights w_i = alpha_i * prod_{j<i}(1 - alpha_j) with
/// alpha_i = 1 - exp(-sigma_i * delta_i). sigma [R,S] (>= 0), delta [R,S].
inline ad::Var alpha_weights(const ad::Var& sigma, const Tensor& delta) {
  const Tensor& sv = sigma.val();
  VXS_CHECK(sv.same_shape(delta), InvalidInput, "alpha_weights: sigma/delta shape mismatch");
  const int R = sv.dim(0), S = sv.dim(1);
  Tensor w({R, S});
  for (int r = 0; r < R; ++r) {
    double T = 1.0;
    for (int s = 0; s < S; ++s) {
      int64_t i = int64_t(r) * S + s;
      double a = 1.0 - std::exp(-sv[i] * delta[i]);
      w[i] = a * T;
      T *= (1.0 - a);
    }
  }
  Tensor dcopy = delta;
  return ad::make_op(std::move(w), {sigma}, [sigma, dcopy, R, S](ad::Node& n) {
    auto& gs = sigma.grad();
    const Tensor& sv = sigma.val();
    const Tensor& w = n.val;
    std::vector<double> Tnext(static_cast<size_t>(S));
    for (int r = 0; r < R; ++r) {
      // dL/dsigma_j = delta_j * (g_j * T_{j+1} - sum_{i>j} g_i w_i)
      double suffix = 0.0;
      double T = 1.0;
      for (int s = 0; s < S; ++s) {
        int64_t i = int64_t(r) * S + s;
        T *= std::exp(-sv[i] * dcopy[i]);
        Tnext[size_t(s)] = T;
      }
      for (int s = S - 1; s >= 0; --s) {
        int64_t i = int64_t(r) * S + s;
        gs[i] += dcopy[i] * (n.grad[i] * Tnext[size_t(s)] - suffix);
        suffix += n.grad[i] * w[i];
      }
    }
  });
}

/// Per-ray RGB: sum_s w_s c_s + (1 - sum_s w_s) * background.
inline ad::Var composite_rgb(const ad::Var& w, const ad::Var& color, const Vec3& bg) {
  const int R = w.val().dim(0), S = w.val().dim(1);
  VXS_CHECK(color.val().ndim() == 3 && color.val().dim(0) == R && color.val().dim(1) == S &&
                color.val().dim(2) == 3,
            InvalidInput, "composite_rgb: color shape mismatch");
  Tensor out({R, 3});
  for (int r = 0; r < R; ++r) {
    double acc[3] = {0, 0, 0}, wsum = 0.0;
    for (int s = 0; s < S; ++s) {
      double ws = w.val()[int64_t(r) * S + s];
      wsum += ws;
      for (int c = 0; c < 3; ++c) acc[c] += ws * color.val()[(int64_t(r) * S + s) * 3 + c];
    }
    for (int c = 0; c < 3; ++c) out[int64_t(r) * 3 + c] = acc[c] + (1.0 - wsum) * bg[size_t(c)];
  }
  return ad::make_op(std::move(out), {w, color}, [w, color, bg, R, S](ad::Node& n) {
    if (w.requires_grad()) {
      auto& gw = w.grad();
      for (int r = 0; r < R; ++r)
        for (int s = 0; s < S; ++s) {
          double acc = 0.0;
          for (int c = 0; c < 3; ++c)
            acc += n.grad[int64_t(r) * 3 + c] *
                   (color.val()[(int64_t(r) * S + s) * 3 + c] - bg[size_t(c)]);
          gw[int64_t(r) * S + s] += acc;
        }
    }
    if (color.requires_grad()) {
      auto& gc = color.grad();
      for (int r = 0; r < R; ++r)
        for (int s = 0; s < S; ++s)
          for (int c = 0; c < 3; ++c)
            gc[(int64_t(r) * S + s) * 3 + c] +=
                n.grad[int64_t(r) * 3 + c] * w.val()[int64_t(r) * S + s];
    }
  });
}

/// Per-ray expected depth: sum_s w_s t_s + (1 - sum_s w_s) * t_far.
inline ad::Var composite_depth(const ad::Var& w, const Tensor& t, const Tensor& t_far) {
  const int R = w.val().dim(0), S = w.val().dim(1);
  VXS_CHECK(t.same_shape(w.val()), InvalidInput, "composite_depth: t shape mismatch");
  VXS_CHECK(t_far.numel() == R, InvalidInput, "composite_depth: t_far size mismatch");
  Tensor out({R, 1});
  for (int r = 0; r < R; ++r) {
    double acc = 0.0, wsum = 0.0;
    for (int s = 0; s < S; ++s) {
      double ws = w.val()[int64_t(r) * S + s];
      wsum += ws;
      acc += ws * t[int64_t(r) * S + s];
    }
    out[r] = acc + (1.0 - wsum) * t_far[r];
  }
  Tensor tc = t, tf = t_far;
  return ad::make_op(std::move(out), {w}, [w, tc, tf, R, S](ad::Node& n) {
    auto& gw = w.grad();
    for (int r = 0; r < R; ++r)
      for (int s = 0; s < S; ++s)
        gw[int64_t(r) * S + s] += n.grad[r] * (tc[int64_t(r) * S + s] - tf[r]);
  });
}

/// Per-ray accumulated opacity sum_s w_s.
inline ad::Var composite_alpha(const ad::Var& w) {
  const int R = w.val().dim(0), S = w.val().dim(1);
  Tensor out({R, 1});
  for (int r = 0; r < R; ++r) {
    double acc = 0.0;
    for (int s = 0; s < S; ++s) acc += w.val()[int64_t(r) * S + s];
    out[r] = acc;
  }
  return ad::make_op(std::move(out), {w}, [w, R, S](ad::Node& n) {
    auto& gw = w.grad();
    for (int r = 0; r < R; ++r)
      for (int s = 0; s < S; ++s) gw[int64_t(r) * S + s] += n.grad[r];
  });
}

// ---------------------------------------------------------------------------
// Plain (non-autodiff) compositing over an explicit sample batch

/// Per-ray samples for one rendering pass. t must be strictly increasing
/// along each ray with positive interval lengths.
struct RaySampleBatch {
  int n_rays = 0;
  int n_samples = 0;
  Tensor t;      // [R,S] sample depths
  Tensor delta;  // [R,S] interval lengths
  Tensor sigma;  // [R,S] non-negative densities
  Tensor color;  // [R,S,3]
  Tensor t_far;  // [R] depth assigned to remaining transmittance

  void validate() const {
    VXS_CHECK(n_samples >= 1, InvalidInput, "sample batch is empty");
    for (int r = 0; r < n_rays; ++r)
      for (int s = 0; s < n_samples; ++s) {
        int64_t i = int64_t(r) * n_samples + s;
        VXS_CHECK(sigma[i] >= 0.0, InvalidInput, "sigma must be non-negative");
        VXS_CHECK(delta[i] > 0.0, InvalidInput, "interval lengths must be positive");
        if (s > 0)
          VXS_CHECK(t[i] > t[i - 1], InvalidInput, "sample depths must be strictly increasing");
      }
  }
};

struct CompositeResult {
  Tensor rgb;      // [R,3]
  Tensor depth;    // [R,1]
  Tensor alpha;    // [R,1]
  Tensor weights;  // [R,S]
};

inline CompositeResult composite(const RaySampleBatch& batch, const Vec3& background) {
  batch.validate();
  ad::Var sigma = ad::constant(batch.sigma);
  ad::Var color = ad::constant(batch.color);
  ad::Var w = alpha_weights(sigma, batch.delta);
  CompositeResult res;
  res.rgb = composite_rgb(w, color, background).val();
  res.depth = composite_depth(w, batch.t, batch.t_far).val();
  res.alpha = composite_alpha(w).val();
  res.weights = w.val();
  return res;
}

// ---------------------------------------------------------------------------
// Full view rendering

struct RenderOptions {
  int n_samples = 128;
  bool use_deformation = true;
  /// Jitter for stratified sampling; nullptr renders at bin midpoints,
  /// which is deterministic and reproduces bit-exactly.
  Rng* jitter = nullptr;
  double near_override = 0.0;  // <= 0: ray/box entry
  double far_override = 0.0;   // <= 0: ray/box exit
};

/// Differentiable render of a full view (or any ray set).
struct RenderVars {
  ad::Var rgb;    // [R,3]
  ad::Var depth;  // [R,1]
  ad::Var alpha;  // [R,1]
  Tensor t;       // [R,S]
  Tensor delta;   // [R,S]
  Tensor t_near;  // [R]
  Tensor t_far;   // [R]
  ad::Var weights;  // [R,S]
};

inline RenderVars render_rays(const FieldVars& fv, const RayBatch& rays,
                              const RenderOptions& opt) {
  VXS_CHECK(opt.n_samples >= 2, ConfigError, "n_samples must be >= 2");
  const VoxelGrid& dg = *fv.density.grid;
  Vec3 bmin{dg.spec.bounds_min[0], dg.spec.bounds_min[1], dg.spec.bounds_min[2]};
  Vec3 bmax{dg.spec.bounds_max[0], dg.spec.bounds_max[1], dg.spec.bounds_max[2]};
  const int R = rays.origins.dim(0);
  const int S = opt.n_samples;

  // Scene-extent fallback so missed rays still carry a defined depth.
  double diag = norm(bmax - bmin);

  std::vector<int> hit_rows;
  Tensor t({R, S}), delta({R, S}), tnear({R}), tfar({R});
  for (int r = 0; r < R; ++r) {
    Vec3 o{rays.origins[int64_t(r) * 3], rays.origins[int64_t(r) * 3 + 1],
           rays.origins[int64_t(r) * 3 + 2]};
    Vec3 d{rays.directions[int64_t(r) * 3], rays.directions[int64_t(r) * 3 + 1],
           rays.directions[int64_t(r) * 3 + 2]};
    double t0, t1;
    bool hit = ray_box(o, d, bmin, bmax, t0, t1);
    if (opt.near_override > 0.0) t0 = opt.near_override;
    if (opt.far_override > 0.0) t1 = opt.far_override;
    VXS_CHECK(!(hit && t0 >= t1), ConfigError, "degenerate near/far: t_near >= t_far");
    if (!hit) {
      tnear[r] = tfar[r] = (opt.far_override > 0.0) ? opt.far_override : diag;
      continue;
    }
    t0 = std::max(t0, 1e-6);
    tnear[r] = t0;
    tfar[r] = t1;
    hit_rows.push_back(r);
    double bin = (t1 - t0) / S;
    for (int s = 0; s < S; ++s) {
      double u = opt.jitter ? opt.jitter->uniform() : 0.5;
      t[int64_t(r) * S + s] = t0 + (s + u) * bin;
    }
    for (int s = 0; s < S - 1; ++s)
      delta[int64_t(r) * S + s] = t[int64_t(r) * S + s + 1] - t[int64_t(r) * S + s];
    delta[int64_t(r) * S + S - 1] = t1 - t[int64_t(r) * S + S - 1];
  }

  const int RH = static_cast<int>(hit_rows.size());
  RenderVars out;
  out.t = t;
  out.delta = delta;
  out.t_near = tnear;
  out.t_far = tfar;

  if (RH == 0) {
    Tensor dep({R, 1});
    for (int r = 0; r < R; ++r) dep[r] = tfar[r];
    out.rgb = ad::constant(Tensor({R, 3}));
    out.depth = ad::constant(std::move(dep));
    out.alpha = ad::constant(Tensor({R, 1}));
    out.weights = ad::constant(Tensor({R, S}));
    return out;
  }

  // Sample positions for hit rays only.
  Tensor pts({RH * S, 3});
  Tensor th({RH, S}), dh({RH, S}), tfh({RH});
  for (int i = 0; i < RH; ++i) {
    int r = hit_rows[size_t(i)];
    tfh[i] = tfar[r];
    for (int s = 0; s < S; ++s) {
      double ts = t[int64_t(r) * S + s];
      th[int64_t(i) * S + s] = ts;
      dh[int64_t(i) * S + s] = delta[int64_t(r) * S + s];
      for (int k = 0; k < 3; ++k)
        pts[(int64_t(i) * S + s) * 3 + k] =
            rays.origins[int64_t(r) * 3 + k] + ts * rays.directions[int64_t(r) * 3 + k];
    }
  }

  ad::Var x = ad::constant(std::move(pts));
  ad::Var q = x;
  if (opt.use_deformation) q = ad::add(x, sample_deformation(fv, x));
  ad::Var sigma = trilinear_sample(fv.density, q, Activation::softplus, {RH, S});
  ad::Var color = trilinear_sample(fv.color, q, Activation::sigmoid, {RH, S, 3});
  ad::Var w = alpha_weights(sigma, dh);

  // Scatter hit-ray results into full-size images; missed rays keep zero
  // opacity so downstream compositing assigns pure background.
  auto scatter = [&](const ad::Var& vals, int cols) {
    Tensor full({R, cols});
    for (int i = 0; i < RH; ++i)
      for (int c = 0; c < cols; ++c)
        full[int64_t(hit_rows[size_t(i)]) * cols + c] = vals.val()[int64_t(i) * cols + c];
    auto rows = hit_rows;
    return ad::make_op(std::move(full), {vals}, [vals, rows, cols](ad::Node& n) {
      auto& g = vals.grad();
      for (size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < cols; ++c)
          g[int64_t(i) * cols + c] += n.grad[int64_t(rows[i]) * cols + c];
    });
  };

  ad::Var rgb_h = composite_rgb(w, color, Vec3{0, 0, 0});
  ad::Var dep_h = composite_depth(w, th, tfh);
  ad::Var alp_h = composite_alpha(w);

  ad::Var alpha_full = scatter(alp_h, 1);
  ad::Var rgb_full = scatter(rgb_h, 3);
  // depth for missed rays: t_far
  Tensor dep_fill({R, 1});
  for (int r = 0; r < R; ++r) dep_fill[r] = tfar[r];
  {
    Tensor full = dep_fill;
    for (int i = 0; i < RH; ++i) full[hit_rows[size_t(i)]] = dep_h.val()[i];
    auto rows = hit_rows;
    out.depth = ad::make_op(std::move(full), {dep_h}, [dep_h, rows](ad::Node& n) {
      auto& g = dep_h.grad();
      for (size_t i = 0; i < rows.size(); ++i) g[int64_t(i)] += n.grad[rows[i]];
    });
  }
  out.rgb = rgb_full;
  out.alpha = alpha_full;
  out.weights = w;
  return out;
}

/// Adds the background contribution to a composited RGB batch:
/// rgb + (1 - alpha) * background. Kept separate so ray batches rendered
/// against a black background can be re-composited cheaply.
inline ad::Var apply_background(const ad::Var& rgb, const ad::Var& alpha, const Vec3& bg) {
  const int R = rgb.val().dim(0);
  Tensor out = rgb.val();
  for (int r = 0; r < R; ++r) {
    double rem = 1.0 - alpha.val()[r];
    for (int c = 0; c < 3; ++c) out[int64_t(r) * 3 + c] += rem * bg[size_t(c)];
  }
  return ad::make_op(std::move(out), {rgb, alpha}, [rgb, alpha, bg, R](ad::Node& n) {
    if (rgb.requires_grad()) {
      auto& g = rgb.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (alpha.requires_grad()) {
      auto& g = alpha.grad();
      for (int r = 0; r < R; ++r) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c) acc -= n.grad[int64_t(r) * 3 + c] * bg[size_t(c)];
        g[r] += acc;
      }
    }
  });
}

struct ViewRenderVars {
  ad::Var rgb;    // [H,W,3]
  ad::Var depth;  // [H,W]
  ad::Var alpha;  // [H,W]
};

inline ViewRenderVars render_view_vars(const FieldVars& fv, const RadianceField& field,
                                       const Camera& cam, const RenderOptions& opt) {
  RayBatch rays = generate_rays(cam);
  RenderVars rv = render_rays(fv, rays, opt);
  ad::Var rgb = apply_background(rv.rgb, rv.alpha, field.background);
  ViewRenderVars out;
  out.rgb = ad::reshape(rgb, {cam.height, cam.width, 3});
  out.depth = ad::reshape(rv.depth, {cam.height, cam.width});
  out.alpha = ad::reshape(rv.alpha, {cam.height, cam.width});
  return out;
}

struct ViewRender {
  Tensor rgb;    // [H,W,3]
  Tensor depth;  // [H,W]
  Tensor alpha;  // [H,W]
};

/// Render RGB + expected-depth images for one camera.
inline ViewRender render_view(const RadianceField& field, const Camera& cam,
                              const RenderOptions& opt) {
  field.validate();
  FieldVars fv = lift(field, false, false, false);
  ViewRenderVars v = render_view_vars(fv, field, cam, opt);
  return ViewRender{v.rgb.val(), v.depth.val(), v.alpha.val()};
}

// ---------------------------------------------------------------------------
// Depth as a 3-channel style input

/// Min-max normalize a depth image to [0,1] and replicate it into three
/// identical channels. A constant image maps to 0.5 everywhere. The min and
/// max are treated as constants of the graph.
inline ad::Var depth_style_input(const ad::Var& depth) {
  const Tensor& d = depth.val();
  VXS_CHECK(d.all_finite(), InvalidInput, "depth image has non-finite values");
  VXS_CHECK(d.ndim() == 2, InvalidInput, "depth_style_input expects [H,W]");
  const int H = d.dim(0), W = d.dim(1);
  double dmin = d[0], dmax = d[0];
  for (double v : d.data) {
    dmin = std::min(dmin, v);
    dmax = std::max(dmax, v);
  }
  Tensor out({H, W, 3});
  bool degenerate = (dmax == dmin);
  double scale = degenerate ? 0.0 : 1.0 / (dmax - dmin);
  for (int64_t i = 0; i < int64_t(H) * W; ++i) {
    double v = degenerate ? 0.5 : (d[i] - dmin) * scale;
    out[i * 3 + 0] = out[i * 3 + 1] = out[i * 3 + 2] = v;
  }
  return ad::make_op(std::move(out), {depth}, [depth, scale](ad::Node& n) {
    auto& g = depth.grad();
    for (int64_t i = 0; i < g.numel(); ++i)
      g[i] += scale * (n.grad[i * 3] + n.grad[i * 3 + 1] + n.grad[i * 3 + 2]);
  });
}

inline Tensor depth_style_input(const Tensor& depth) {
  return depth_style_input(ad::constant(depth)).val();
}

/// Camera-forward z-depth from ray depth: multiplies each pixel's ray depth
/// by the cosine between its ray and the camera axis.
inline Tensor ray_depth_to_z(const Tensor& depth, const Camera& cam) {
  VXS_CHECK(depth.ndim() == 2 && depth.dim(0) == cam.height && depth.dim(1) == cam.width,
            InvalidInput, "ray_depth_to_z: image size mismatch");
  Tensor out = depth;
  Vec3 fwd = cam.forward();
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Vec3 dir = cam.pixel_ray(x + 0.5, y + 0.5);
      out[int64_t(y) * cam.width + x] *= dot(dir, fwd);
    }
  return out;
}

}  // namespace vxs
