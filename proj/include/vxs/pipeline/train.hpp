#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vxs/pipeline/checkpoint.hpp"
#include "vxs/pipeline/config.hpp"
#include "vxs/pipeline/optimizer.hpp"
#include "vxs/render/renderer.hpp"
#include "vxs/scene/dataset.hpp"
#include "vxs/style/losses.hpp"
#include "vxs/style/perspective.hpp"

namespace vxs {

inline double psnr_from_mse(double mse) {
  if (mse <= 1e-10) return 99.0;
  return -10.0 * std::log10(mse);
}

inline double image_psnr(const Tensor& a, const Tensor& b) {
  VXS_CHECK(a.same_shape(b), InvalidInput, "image_psnr: shape mismatch");
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a[i] - b[i];
    mse += d * d;
  }
  return psnr_from_mse(mse / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------------------
// Distortion regularizer (bi-weighted form over normalized ray intervals)

/// L = mean over rays of  sum_ij w_i w_j |m_i - m_j| + (1/3) sum_i w_i^2 d_i
/// with m_i interval midpoints and d_i widths in normalized ray distance.
/// Expects m ascending along each ray.
inline ad::Var distortion_regularizer(const ad::Var& w, const Tensor& mids,
                                      const Tensor& widths) {
  const Tensor& wv = w.val();
  VXS_CHECK(wv.same_shape(mids) && wv.same_shape(widths), InvalidInput,
            "distortion_regularizer: shape mismatch");
  const int R = wv.dim(0), S = wv.dim(1);
  double total = 0.0;
  for (int r = 0; r < R; ++r) {
    double wsum = 0.0, msum = 0.0, pair = 0.0, self = 0.0;
    for (int s = 0; s < S; ++s) {
      int64_t i = int64_t(r) * S + s;
      pair += 2.0 * wv[i] * (mids[i] * wsum - msum);
      wsum += wv[i];
      msum += wv[i] * mids[i];
      self += wv[i] * wv[i] * widths[i];
    }
    total += pair + self / 3.0;
  }
  total /= static_cast<double>(R);
  Tensor mc = mids, dc = widths;
  return ad::make_op(Tensor::scalar(total), {w}, [w, mc, dc, R, S](ad::Node& n) {
    auto& g = w.grad();
    const Tensor& wv = w.val();
    double go = n.grad[0] / static_cast<double>(R);
    std::vector<double> wpre(static_cast<size_t>(S) + 1, 0.0);
    std::vector<double> mpre(static_cast<size_t>(S) + 1, 0.0);
    for (int r = 0; r < R; ++r) {
      for (int s = 0; s < S; ++s) {
        int64_t i = int64_t(r) * S + s;
        wpre[size_t(s) + 1] = wpre[size_t(s)] + wv[i];
        mpre[size_t(s) + 1] = mpre[size_t(s)] + wv[i] * mc[i];
      }
      double wtot = wpre[size_t(S)], mtot = mpre[size_t(S)];
      for (int s = 0; s < S; ++s) {
        int64_t i = int64_t(r) * S + s;
        double below = mc[i] * wpre[size_t(s)] - mpre[size_t(s)];
        double above = (mtot - mpre[size_t(s) + 1]) - mc[i] * (wtot - wpre[size_t(s) + 1]);
        g[i] += go * (2.0 * (below + above) + (2.0 / 3.0) * wv[i] * dc[i]);
      }
    }
  });
}

/// Spec-facing form over an explicit sample batch; intervals normalized to
/// the [first sample, last interval end] span of each ray.
inline double distortion_regularizer(const RaySampleBatch& batch) {
  batch.validate();
  CompositeResult cr = composite(batch, {0, 0, 0});
  const int R = batch.n_rays, S = batch.n_samples;
  Tensor mids({R, S}), widths({R, S});
  for (int r = 0; r < R; ++r) {
    double t0 = batch.t[int64_t(r) * S];
    double t1 = batch.t[int64_t(r) * S + S - 1] + batch.delta[int64_t(r) * S + S - 1];
    double span = std::max(t1 - t0, 1e-12);
    for (int s = 0; s < S; ++s) {
      int64_t i = int64_t(r) * S + s;
      mids[i] = (batch.t[i] + 0.5 * batch.delta[i] - t0) / span;
      widths[i] = batch.delta[i] / span;
    }
  }
  return distortion_regularizer(ad::constant(cr.weights), mids, widths).scalar();
}

// ---------------------------------------------------------------------------
// Deformation smoothness (anisotropic total variation on the grid)

/// Mean absolute forward difference over the three grid axes and channels.
inline ad::Var deformation_tv(const GridVars& gv) {
  const VoxelGrid& g = *gv.grid;
  VXS_CHECK(g.storage == GridStorage::dense, InvalidInput,
            "deformation_tv expects a dense grid");
  const auto& res = g.spec.resolution;
  const int C = g.spec.channels;
  const ad::Var& leaf = gv.params[0];
  const Tensor& v = leaf.val();
  auto idx = [&](int x, int y, int z, int c) {
    return ((int64_t(x) * res[1] + y) * res[2] + z) * C + c;
  };
  int64_t terms = 0;
  double total = 0.0;
  for (int x = 0; x < res[0]; ++x)
    for (int y = 0; y < res[1]; ++y)
      for (int z = 0; z < res[2]; ++z)
        for (int c = 0; c < C; ++c) {
          if (x + 1 < res[0]) {
            total += std::abs(v[idx(x + 1, y, z, c)] - v[idx(x, y, z, c)]);
            ++terms;
          }
          if (y + 1 < res[1]) {
            total += std::abs(v[idx(x, y + 1, z, c)] - v[idx(x, y, z, c)]);
            ++terms;
          }
          if (z + 1 < res[2]) {
            total += std::abs(v[idx(x, y, z + 1, c)] - v[idx(x, y, z, c)]);
            ++terms;
          }
        }
  if (terms == 0) return ad::constant(Tensor::scalar(0.0));
  total /= static_cast<double>(terms);
  const VoxelGrid* gp = &g;
  return ad::make_op(Tensor::scalar(total), {leaf}, [leaf, gp, terms](ad::Node& n) {
    const auto& res = gp->spec.resolution;
    const int C = gp->spec.channels;
    auto idx = [&](int x, int y, int z, int c) {
      return ((int64_t(x) * res[1] + y) * res[2] + z) * C + c;
    };
    auto& grad = leaf.grad();
    const Tensor& v = leaf.val();
    double go = n.grad[0] / static_cast<double>(terms);
    auto accum = [&](int64_t hi, int64_t lo) {
      double d = v[hi] - v[lo];
      double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      grad[hi] += go * s;
      grad[lo] -= go * s;
    };
    for (int x = 0; x < res[0]; ++x)
      for (int y = 0; y < res[1]; ++y)
        for (int z = 0; z < res[2]; ++z)
          for (int c = 0; c < C; ++c) {
            if (x + 1 < res[0]) accum(idx(x + 1, y, z, c), idx(x, y, z, c));
            if (y + 1 < res[1]) accum(idx(x, y + 1, z, c), idx(x, y, z, c));
            if (z + 1 < res[2]) accum(idx(x, y, z + 1, c), idx(x, y, z, c));
          }
  });
}

// ---------------------------------------------------------------------------
// View-consistent color transfer (whitening / recoloring, one affine map
// applied to the whole color grid)

struct ColorStats {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 9> cov{0, 0, 0, 0, 0, 0, 0, 0, 0};
};

/// Population statistics over all RGB triples of an image or row tensor.
inline ColorStats color_stats(const Tensor& img) {
  VXS_CHECK(img.numel() % 3 == 0 && img.numel() > 0, InvalidInput,
            "color_stats expects RGB data");
  const int64_t n = img.numel() / 3;
  ColorStats st;
  for (int64_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) st.mean[size_t(c)] += img[i * 3 + c];
  for (auto& m : st.mean) m /= static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        st.cov[size_t(a) * 3 + b] +=
            (img[i * 3 + a] - st.mean[size_t(a)]) * (img[i * 3 + b] - st.mean[size_t(b)]);
  for (auto& c : st.cov) c /= static_cast<double>(n);
  return st;
}

struct ColorTransform {
  std::array<double, 9> A{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> b{0, 0, 0};
  bool identity = false;     // near-identity transforms are skipped entirely
  bool regularized = false;  // singular covariance handled with +eps*I
};

inline ColorTransform solve_color_transform(const ColorStats& src, const ColorStats& dst,
                                            std::vector<std::string>* warnings = nullptr) {
  using M3 = Eigen::Matrix3d;
  auto to_m = [](const std::array<double, 9>& a) {
    M3 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = a[size_t(i) * 3 + j];
    return m;
  };
  ColorTransform out;
  M3 cs = to_m(src.cov), cd = to_m(dst.cov);
  auto prep = [&](M3& m, const char* which) {
    Eigen::SelfAdjointEigenSolver<M3> es(m);
    if (es.eigenvalues().minCoeff() < 1e-10) {
      m += 1e-5 * M3::Identity();
      out.regularized = true;
      if (warnings)
        warnings->push_back(std::string("singular ") + which +
                            " color covariance regularized with eps=1e-5");
    }
  };
  prep(cs, "source");
  prep(cd, "style");

  auto sqrt_psd = [](const M3& m, bool inverse) {
    Eigen::SelfAdjointEigenSolver<M3> es(m);
    Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);
    Eigen::Vector3d root;
    for (int i = 0; i < 3; ++i)
      root(i) = inverse ? 1.0 / std::sqrt(std::max(ev(i), 1e-12)) : std::sqrt(ev(i));
    return M3(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
  };

  M3 A = sqrt_psd(cd, false) * sqrt_psd(cs, true);
  Eigen::Vector3d mu_s(src.mean[0], src.mean[1], src.mean[2]);
  Eigen::Vector3d mu_d(dst.mean[0], dst.mean[1], dst.mean[2]);
  Eigen::Vector3d b = mu_d - A * mu_s;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.A[size_t(i) * 3 + j] = A(i, j);
    out.b[size_t(i)] = b(i);
  }

  double dev = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      dev = std::max(dev, std::abs(out.A[size_t(i) * 3 + j] - (i == j ? 1.0 : 0.0)));
  for (double bi : out.b) dev = std::max(dev, std::abs(bi));
  out.identity = dev < 1e-6;
  return out;
}

/// Affine recoloring of an RGB image (unclamped).
inline Tensor apply_color_transform(const Tensor& img, const ColorTransform& t) {
  VXS_CHECK(img.numel() % 3 == 0, InvalidInput, "apply_color_transform expects RGB data");
  if (t.identity) return img;
  Tensor out = img;
  const int64_t n = img.numel() / 3;
  for (int64_t i = 0; i < n; ++i) {
    double c[3];
    for (int a = 0; a < 3; ++a) {
      c[a] = t.b[size_t(a)];
      for (int b = 0; b < 3; ++b) c[a] += t.A[size_t(a) * 3 + b] * img[i * 3 + b];
    }
    for (int a = 0; a < 3; ++a) out[i * 3 + a] = c[a];
  }
  return out;
}

/// Recolor the whole appearance grid through its sigmoid decoding; one
/// transform for the entire field keeps the result view-consistent.
inline void apply_color_transform_to_grid(VoxelGrid& color, const ColorTransform& t) {
  VXS_CHECK(color.spec.channels == 3, InvalidInput, "color grid must have 3 channels");
  VXS_CHECK(color.storage == GridStorage::dense, InvalidInput,
            "color transfer on vm grids requires densify-then-refit; use dense mode");
  if (t.identity) return;
  for (size_t i = 0; i < color.dense.size(); i += 3) {
    double c[3];
    for (int a = 0; a < 3; ++a) c[a] = ad::sigmoid_fn(double(color.dense[i + size_t(a)]));
    double o[3];
    for (int a = 0; a < 3; ++a) {
      o[a] = t.b[size_t(a)];
      for (int b = 0; b < 3; ++b) o[a] += t.A[size_t(a) * 3 + b] * c[b];
      o[a] = std::min(1.0 - 1e-4, std::max(1e-4, o[a]));
      color.dense[i + size_t(a)] = static_cast<float>(std::log(o[a] / (1.0 - o[a])));
    }
  }
}

// ---------------------------------------------------------------------------
// Pretraining

using MetricsLog = std::vector<nlohmann::json>;

struct PretrainOutput {
  RadianceField field;
  double final_psnr = 0.0;
  MetricsLog log;
  GridOptimizer opt_density, opt_color;
  Rng rng{0};
  int64_t iteration = 0;
};

inline RadianceField make_field_for(const SceneDataset& ds, const TrainConfig& cfg) {
  RadianceField::Options o;
  o.resolution = cfg.grid.resolution;
  o.deform_resolution = cfg.grid.deform_resolution;
  o.bounds_min = {ds.bounds_min[0], ds.bounds_min[1], ds.bounds_min[2]};
  o.bounds_max = {ds.bounds_max[0], ds.bounds_max[1], ds.bounds_max[2]};
  o.storage = cfg.grid.mode == "vm" ? GridStorage::vm : GridStorage::dense;
  o.rank = cfg.grid.rank;
  RadianceField f = RadianceField::create(o);
  if (o.storage == GridStorage::vm) {
    Rng init_rng(splitmix64(cfg.seed ^ 0x76d5ULL));
    f.density.randomize(init_rng, 0.05);
    f.color.randomize(init_rng, 0.05);
  }
  f.background = {ds.background[0], ds.background[1], ds.background[2]};
  f.init_deformation_zero();
  return f;
}

inline void run_pretrain_steps(RadianceField& field, PretrainOutput& state,
                               const SceneDataset& ds, const TrainConfig& cfg, int64_t steps,
                               const std::function<void(int64_t, double)>& progress);

/// Photometric pretraining: MSE over random ray batches plus the distortion
/// regularizer. Density and color grids train; the deformation grid stays
/// exactly zero.
inline PretrainOutput pretrain(const SceneDataset& ds, const TrainConfig& cfg,
                               const std::function<void(int64_t, double)>& progress = {}) {
  ds.validate();
  cfg.validate();
  PretrainOutput out;
  out.field = make_field_for(ds, cfg);
  out.rng = Rng(splitmix64(cfg.seed ^ 0x1d7a11ULL));
  out.opt_density.hp.lr = cfg.pretrain.lr_density;
  out.opt_color.hp.lr = cfg.pretrain.lr_color;
  out.opt_density.init_for(out.field.density);
  out.opt_color.init_for(out.field.color);
  run_pretrain_steps(out.field, out, ds, cfg, cfg.pretrain.iters, progress);
  // Report fit quality against the training views.
  double acc = 0.0;
  RenderOptions ro;
  ro.n_samples = cfg.render.n_samples;
  ro.use_deformation = false;
  for (const auto& v : ds.views) {
    ViewRender r = render_view(out.field, v.camera, ro);
    acc += image_psnr(r.rgb, v.image);
  }
  out.final_psnr = acc / static_cast<double>(ds.views.size());
  return out;
}

inline void run_pretrain_steps(RadianceField& field, PretrainOutput& state,
                               const SceneDataset& ds, const TrainConfig& cfg, int64_t steps,
                               const std::function<void(int64_t, double)>& progress) {
  const int V = static_cast<int>(ds.views.size());
  const int B = cfg.pretrain.batch_rays;
  for (int64_t it = 0; it < steps; ++it) {
    Tensor origins({B, 3}), dirs({B, 3}), gt({B, 3});
    for (int b = 0; b < B; ++b) {
      int vi = state.rng.uniform_int(V);
      const SceneView& view = ds.views[size_t(vi)];
      int px = state.rng.uniform_int(view.camera.width);
      int py = state.rng.uniform_int(view.camera.height);
      Vec3 dir = view.camera.pixel_ray(px + 0.5, py + 0.5);
      for (int k = 0; k < 3; ++k) {
        origins[int64_t(b) * 3 + k] = view.camera.position[size_t(k)];
        dirs[int64_t(b) * 3 + k] = dir[size_t(k)];
        gt[int64_t(b) * 3 + k] = view.image.at(py, px, k);
      }
    }

    FieldVars fv = lift(field, true, true, false);
    RenderOptions ro;
    ro.n_samples = cfg.render.n_samples;
    ro.use_deformation = false;
    ro.jitter = cfg.pretrain.jitter ? &state.rng : nullptr;
    RenderVars rv = render_rays(fv, RayBatch{origins, dirs}, ro);
    ad::Var rgb = apply_background(rv.rgb, rv.alpha, field.background);
    ad::Var loss = ad::mse(rgb, ad::constant(gt));
    double mse_val = loss.scalar();

    if (cfg.pretrain.w_distortion > 0.0) {
      const int S = cfg.render.n_samples;
      Tensor mids({B, S}), widths({B, S});
      for (int r = 0; r < B; ++r) {
        double span = std::max(rv.t_far[r] - rv.t_near[r], 1e-12);
        for (int s = 0; s < S; ++s) {
          int64_t i = int64_t(r) * S + s;
          mids[i] = (rv.t[i] + 0.5 * rv.delta[i] - rv.t_near[r]) / span;
          widths[i] = rv.delta[i] / span;
        }
      }
      loss = ad::add(loss, ad::scale(distortion_regularizer(rv.weights, mids, widths),
                                     cfg.pretrain.w_distortion));
    }

    double total = loss.scalar();
    if (!std::isfinite(total))
      throw NumericError("pretraining diverged at iteration " + std::to_string(state.iteration) +
                         " (non-finite loss)");
    ad::backward(loss);
    state.opt_density.step(field.density, fv.density);
    state.opt_color.step(field.color, fv.color);
    ++state.iteration;

    if (state.iteration % 50 == 0 || it + 1 == steps) {
      state.log.push_back({{"iter", state.iteration},
                           {"mse", mse_val},
                           {"psnr", psnr_from_mse(mse_val)},
                           {"loss", total}});
      if (progress) progress(state.iteration, total);
    }
  }
}

// ---------------------------------------------------------------------------
// Stylization

struct StylizeSession {
  TrainConfig cfg;
  std::vector<Camera> cameras;
  StylePair style;
  FeatureExtractor extractor;
  std::vector<Tensor> content_targets;  // pretrained renders per camera
  BinLayout layout;
  std::vector<StyleLevelFeatures> style_levels;
  GridOptimizer opt_color, opt_deform;
  Rng rng{0};
  int64_t iteration = 0;
  MetricsLog log;
  std::vector<std::string> warnings;
};

namespace detail {

inline void check_style_pair(const StylePair& style) {
  VXS_CHECK(style.rgb.ndim() == 3 && style.rgb.dim(2) == 3, ConfigError,
            "style RGB must be a 3-channel image");
  VXS_CHECK(style.depth.ndim() == 2 && style.depth.dim(0) == style.rgb.dim(0) &&
                style.depth.dim(1) == style.rgb.dim(1),
            ConfigError, "style depth must align with the style RGB image");
}

inline BinLayout single_bin_layout() {
  BinLayout l;
  l.centers = {1.0};
  l.scales = {1.0};
  return l;
}

inline std::vector<StyleLevelFeatures> build_style_levels(const StylePair& style,
                                                          const BinLayout& layout,
                                                          const FeatureExtractor& fe,
                                                          std::vector<std::string>* warnings) {
  StylePyramid pyr = build_style_pyramid(style, layout, warnings);
  std::vector<StyleLevelFeatures> out;
  for (int b = 0; b < layout.bins(); ++b)
    out.push_back(compute_style_features(pyr.level(b), fe));
  return out;
}

}  // namespace detail

/// Prepare a stylization run: content targets, optional color transfer and
/// the perspective layout/pyramid. The density grid is never modified.
inline StylizeSession begin_stylize(RadianceField& field, std::vector<Camera> cameras,
                                    StylePair style, const TrainConfig& cfg,
                                    const FeatureExtractor& extractor) {
  cfg.validate();
  field.validate();
  VXS_CHECK(!cameras.empty(), InvalidInput, "stylize: no cameras");
  detail::check_style_pair(style);

  StylizeSession s;
  s.cfg = cfg;
  s.cameras = std::move(cameras);
  s.style = std::move(style);
  s.extractor = extractor;
  s.rng = Rng(splitmix64(cfg.seed ^ 0x5717eULL));
  s.opt_color.hp.lr = cfg.stylize.lr_color;
  s.opt_deform.hp.lr = cfg.stylize.lr_deform;
  s.opt_color.init_for(field.color);
  s.opt_deform.init_for(field.deformation);

  RenderOptions ro;
  ro.n_samples = cfg.render.n_samples;
  ro.use_deformation = true;
  for (const Camera& cam : s.cameras) {
    ViewRender r = render_view(field, cam, ro);
    s.content_targets.push_back(r.rgb);
  }

  if (cfg.stylize.use_color_transfer) {
    Tensor all({static_cast<int>(s.content_targets.size()) * s.content_targets[0].dim(0) *
                    s.content_targets[0].dim(1),
                3});
    int64_t k = 0;
    for (const auto& t : s.content_targets)
      for (int64_t i = 0; i < t.numel(); ++i) all[k++] = t[i];
    ColorTransform t =
        solve_color_transform(color_stats(all), color_stats(s.style.rgb), &s.warnings);
    apply_color_transform_to_grid(field.color, t);
  }

  s.layout = cfg.stylize.perspective_bins > 1
                 ? build_bin_layout(field, s.cameras, cfg.stylize.perspective_bins,
                                    cfg.render.n_samples)
                 : detail::single_bin_layout();
  s.style_levels = detail::build_style_levels(s.style, s.layout, s.extractor, &s.warnings);
  return s;
}

/// Run stylization iterations: per step, render a random training view with
/// deformation, evaluate the configured losses and step the color and
/// deformation grids. The density grid is bitwise unchanged at exit.
inline void stylize_steps(RadianceField& field, StylizeSession& s, int64_t steps,
                          const std::function<void(int64_t, double)>& progress = {}) {
  const TrainConfig& cfg = s.cfg;
  std::vector<float> density_before = field.density.dense;
  std::array<std::vector<float>, 3> vm_before_v, vm_before_m;
  if (field.density.storage == GridStorage::vm) {
    vm_before_v = field.density.vm_vec;
    vm_before_m = field.density.vm_mat;
  }

  LayeredLossConfig lcfg;
  lcfg.use_geometry_aware = cfg.stylize.use_geometry_aware;
  lcfg.use_patch = cfg.stylize.use_patch;
  lcfg.patch_k = cfg.stylize.patch_k;
  lcfg.patch_r = cfg.stylize.patch_r;
  lcfg.patch_stride = cfg.stylize.patch_stride;
  lcfg.depth_term_weight = cfg.stylize.depth_term_weight;

  for (int64_t it = 0; it < steps; ++it) {
    int cam_idx = s.rng.uniform_int(static_cast<int>(s.cameras.size()));
    const Camera& cam = s.cameras[size_t(cam_idx)];

    bool need_style = cfg.stylize.w_style > 0.0 &&
                      (cfg.stylize.use_geometry_aware || cfg.stylize.use_patch);
    bool need_content = cfg.stylize.w_content > 0.0;
    bool need_smooth = cfg.stylize.w_deform_smooth > 0.0;
    if (!need_style && !need_content && !need_smooth) {
      ++s.iteration;
      continue;  // nothing to optimize; leave all state bitwise intact
    }

    FieldVars fv = lift(field, false, true, true);
    RenderOptions ro;
    ro.n_samples = cfg.render.n_samples;
    ro.use_deformation = true;
    ro.jitter = cfg.stylize.jitter ? &s.rng : nullptr;
    ViewRenderVars view = render_view_vars(fv, field, cam, ro);

    ad::Var loss = ad::constant(Tensor::scalar(0.0));
    double style_val = 0.0, content_val = 0.0, smooth_val = 0.0;

    if (need_style) {
      FeatureMap content_rgb = s.extractor.extract(view.rgb);
      FeatureMap content_depth = s.extractor.extract(depth_style_input(view.depth));
      Tensor z = ray_depth_to_z(view.depth.val(), cam);
      ad::Var style_loss =
          layered_style_loss(content_rgb, content_depth, z, s.layout, s.style_levels, lcfg);
      style_val = style_loss.scalar();
      loss = ad::add(loss, ad::scale(style_loss, cfg.stylize.w_style));
    }
    if (need_content) {
      ad::Var content =
          ad::mse(view.rgb, ad::constant(s.content_targets[size_t(cam_idx)]));
      content_val = content.scalar();
      loss = ad::add(loss, ad::scale(content, cfg.stylize.w_content));
    }
    if (need_smooth) {
      ad::Var smooth = deformation_tv(fv.deformation);
      smooth_val = smooth.scalar();
      loss = ad::add(loss, ad::scale(smooth, cfg.stylize.w_deform_smooth));
    }

    double total = loss.scalar();
    if (!std::isfinite(total))
      throw NumericError("stylization diverged at iteration " + std::to_string(s.iteration));
    ad::backward(loss);
    s.opt_color.step(field.color, fv.color);
    s.opt_deform.step(field.deformation, fv.deformation);
    ++s.iteration;

    if (s.iteration % 20 == 0 || it + 1 == steps) {
      s.log.push_back({{"iter", s.iteration},
                       {"loss", total},
                       {"loss_style", style_val},
                       {"loss_content", content_val},
                       {"loss_smooth", smooth_val}});
      if (progress) progress(s.iteration, total);
    }
  }

  if (field.density.storage == GridStorage::dense) {
    VXS_CHECK(field.density.dense == density_before, NumericError,
              "internal invariant violated: density grid changed during stylization");
  } else {
    VXS_CHECK(field.density.vm_vec == vm_before_v && field.density.vm_mat == vm_before_m,
              NumericError,
              "internal invariant violated: density grid changed during stylization");
  }
}

/// Final color transfer after optimization (view-consistent re-match of the
/// stylized field's palette to the style image).
inline void finish_stylize(RadianceField& field, StylizeSession& s) {
  if (!s.cfg.stylize.use_color_transfer) return;
  RenderOptions ro;
  ro.n_samples = s.cfg.render.n_samples;
  ro.use_deformation = true;
  std::vector<Tensor> renders;
  for (const Camera& cam : s.cameras) renders.push_back(render_view(field, cam, ro).rgb);
  Tensor all({static_cast<int>(renders.size()) * renders[0].dim(0) * renders[0].dim(1), 3});
  int64_t k = 0;
  for (const auto& t : renders)
    for (int64_t i = 0; i < t.numel(); ++i) all[k++] = t[i];
  ColorTransform t =
      solve_color_transform(color_stats(all), color_stats(s.style.rgb), &s.warnings);
  apply_color_transform_to_grid(field.color, t);
}

/// Full stylization pass over a pretrained field.
inline StylizeSession stylize(RadianceField& field, const std::vector<Camera>& cameras,
                              const StylePair& style, const TrainConfig& cfg,
                              const FeatureExtractor& extractor,
                              const std::function<void(int64_t, double)>& progress = {}) {
  StylizeSession s = begin_stylize(field, cameras, style, cfg, extractor);
  stylize_steps(field, s, cfg.stylize.iters, progress);
  finish_stylize(field, s);
  return s;
}

// --- checkpoint conversion --------------------------------------------------

inline Checkpoint session_checkpoint(const RadianceField& field, const StylizeSession& s,
                                     const std::string& stage) {
  Checkpoint ckpt;
  ckpt.stage = stage;
  ckpt.iteration = s.iteration;
  ckpt.config = s.cfg;
  ckpt.field = field;
  ckpt.rng_state = s.rng.serialize();
  ckpt.optimizers = {{"color", s.opt_color}, {"deformation", s.opt_deform}};
  ckpt.bin_layout = s.layout;
  ckpt.content_targets = s.content_targets;
  return ckpt;
}

/// Rebuild a stylization session from a mid-run checkpoint; style features
/// are recomputed deterministically from the style pair and stored layout.
inline StylizeSession resume_stylize(const Checkpoint& ckpt, std::vector<Camera> cameras,
                                     StylePair style, const FeatureExtractor& extractor) {
  VXS_CHECK(ckpt.stage == "stylizing", InvalidInput,
            "resume_stylize needs a mid-stylization checkpoint");
  detail::check_style_pair(style);
  StylizeSession s;
  s.cfg = ckpt.config;
  s.cameras = std::move(cameras);
  s.style = std::move(style);
  s.extractor = extractor;
  s.content_targets = ckpt.content_targets;
  s.layout = ckpt.bin_layout ? *ckpt.bin_layout : detail::single_bin_layout();
  s.style_levels = detail::build_style_levels(s.style, s.layout, s.extractor, &s.warnings);
  s.iteration = ckpt.iteration;
  s.rng.deserialize(ckpt.rng_state);
  for (const auto& [name, opt] : ckpt.optimizers) {
    if (name == "color") s.opt_color = opt;
    if (name == "deformation") s.opt_deform = opt;
  }
  s.opt_color.hp.lr = s.cfg.stylize.lr_color;
  s.opt_deform.hp.lr = s.cfg.stylize.lr_deform;
  return s;
}

// ---------------------------------------------------------------------------
// Geometry-only silhouette fitting (deformation vs direct density baseline)

enum class GeomFitMode { deformation, density };

struct SilhouetteFit {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Fits the rendered accumulated-opacity image to a target silhouette by
/// optimizing either the deformation grid (shape moves, colors follow the
/// canonical surface) or the density grid directly (the baseline that
/// re-sources colors from static space).
inline SilhouetteFit fit_silhouette(RadianceField& field, const Camera& cam,
                                    const Tensor& target_alpha, GeomFitMode mode, int iters,
                                    double lr, int n_samples) {
  SilhouetteFit out;
  GridOptimizer opt;
  opt.hp.lr = lr;
  RenderOptions ro;
  ro.n_samples = n_samples;
  ro.use_deformation = true;
  for (int it = 0; it < iters; ++it) {
    FieldVars fv = lift(field, mode == GeomFitMode::density, false,
                        mode == GeomFitMode::deformation);
    ViewRenderVars v = render_view_vars(fv, field, cam, ro);
    ad::Var loss = ad::mse(v.alpha, ad::constant(target_alpha));
    double val = loss.scalar();
    if (it == 0) out.initial_loss = val;
    out.final_loss = val;
    if (!std::isfinite(val)) throw NumericError("silhouette fit diverged");
    ad::backward(loss);
    if (mode == GeomFitMode::deformation)
      opt.step(field.deformation, fv.deformation);
    else
      opt.step(field.density, fv.density);
  }
  return out;
}

}  // namespace vxs
