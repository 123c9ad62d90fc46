#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "vxs/features/extractor.hpp"
#include "vxs/io/image_io.hpp"
#include "vxs/render/renderer.hpp"
#include "vxs/scene/dataset.hpp"
#include "vxs/style/losses.hpp"

namespace vxs {

/// Depth bins with centers C_i (camera-forward z units) and per-bin style
/// scales s_i = C_1 / C_i. Bins are ordered by increasing depth; s_1 is 1.
struct BinLayout {
  std::vector<double> centers;
  std::vector<double> scales;
  bool degenerate_fallback = false;
  std::string warning;

  int bins() const { return static_cast<int>(centers.size()); }

  void validate() const {
    VXS_CHECK(!centers.empty() && centers.size() == scales.size(), InvalidInput,
              "bin layout is empty or inconsistent");
    VXS_CHECK(scales[0] == 1.0, InvalidInput, "first bin scale must be 1");
    for (size_t i = 1; i < centers.size(); ++i)
      VXS_CHECK(centers[i] > centers[i - 1], InvalidInput,
                "bin centers must be strictly increasing");
  }
};

inline void to_json(nlohmann::json& j, const BinLayout& b) {
  j = {{"centers", b.centers},
       {"scales", b.scales},
       {"degenerate_fallback", b.degenerate_fallback},
       {"warning", b.warning}};
}

inline void from_json(const nlohmann::json& j, BinLayout& b) {
  b.centers = j.at("centers").get<std::vector<double>>();
  b.scales = j.at("scales").get<std::vector<double>>();
  b.degenerate_fallback = j.value("degenerate_fallback", false);
  b.warning = j.value("warning", "");
}

inline std::vector<double> scales_from_centers(const std::vector<double>& centers) {
  std::vector<double> s(centers.size());
  for (size_t i = 0; i < centers.size(); ++i) s[i] = centers[0] / centers[i];
  if (!s.empty()) s[0] = 1.0;
  return s;
}

/// Equal-count binning of surface depths gathered by rendering expected
/// depth from every training camera. Depth values are camera-forward z;
/// background pixels (accumulated opacity below 0.5) are excluded.
inline BinLayout build_bin_layout(const RadianceField& field, const std::vector<Camera>& cameras,
                                  int n_bins, int n_samples = 96) {
  VXS_CHECK(n_bins >= 1, InvalidInput, "build_bin_layout: N must be >= 1");
  VXS_CHECK(!cameras.empty(), InvalidInput, "build_bin_layout: no cameras");

  std::vector<double> zs;
  RenderOptions opt;
  opt.n_samples = n_samples;
  opt.use_deformation = false;  // layout is built on the canonical scene
  for (const Camera& cam : cameras) {
    ViewRender r = render_view(field, cam, opt);
    Tensor z = ray_depth_to_z(r.depth, cam);
    for (int64_t i = 0; i < z.numel(); ++i)
      if (r.alpha[i] > 0.5) zs.push_back(z[i]);
  }

  BinLayout layout;
  if (zs.empty()) {
    layout.centers = {1.0};
    layout.scales = {1.0};
    layout.degenerate_fallback = true;
    layout.warning = "no surface pixels found; single-bin fallback";
    return layout;
  }
  std::sort(zs.begin(), zs.end());
  if (zs.back() - zs.front() < 1e-9) {
    layout.centers = {zs.front()};
    layout.scales = {1.0};
    layout.degenerate_fallback = n_bins > 1;
    if (n_bins > 1) layout.warning = "all surface depths equal; single-bin fallback";
    return layout;
  }

  const size_t M = zs.size();
  std::vector<double> centers;
  std::vector<double> counts;
  for (int b = 0; b < n_bins; ++b) {
    size_t lo = M * static_cast<size_t>(b) / static_cast<size_t>(n_bins);
    size_t hi = M * static_cast<size_t>(b + 1) / static_cast<size_t>(n_bins);
    if (hi <= lo) continue;
    double mean = 0.0;
    for (size_t i = lo; i < hi; ++i) mean += zs[i];
    centers.push_back(mean / static_cast<double>(hi - lo));
    counts.push_back(static_cast<double>(hi - lo));
  }
  // Merge quantile centers closer than 2% relative depth: scale ratios below
  // that are meaningless and arise from tied depth distributions.
  std::vector<double> merged, mcount;
  for (size_t i = 0; i < centers.size(); ++i) {
    if (!merged.empty() && centers[i] - merged.back() <= 0.02 * std::max(merged.back(), 1e-12)) {
      double total = mcount.back() + counts[i];
      merged.back() = (merged.back() * mcount.back() + centers[i] * counts[i]) / total;
      mcount.back() = total;
    } else {
      merged.push_back(centers[i]);
      mcount.push_back(counts[i]);
    }
  }
  if (merged.size() != centers.size()) {
    layout.degenerate_fallback = true;
    layout.warning = "near-equal depth quantiles merged";
  }
  layout.centers = std::move(merged);
  layout.scales = scales_from_centers(layout.centers);
  layout.validate();
  return layout;
}

/// Style pair downsampled per bin scale (area average). Levels never drop
/// below 8x8; a clamped level is recorded in `warnings`.
struct StylePyramid {
  std::vector<StylePair> levels;

  const StylePair& level(int i) const { return levels[static_cast<size_t>(i)]; }
};

inline StylePyramid build_style_pyramid(const StylePair& style, const BinLayout& layout,
                                        std::vector<std::string>* warnings = nullptr) {
  VXS_CHECK(style.rgb.ndim() == 3 && style.depth.ndim() == 2, InvalidInput,
            "build_style_pyramid: malformed style pair");
  VXS_CHECK(style.rgb.dim(0) == style.depth.dim(0) && style.rgb.dim(1) == style.depth.dim(1),
            InvalidInput, "build_style_pyramid: style RGB and depth are misaligned");
  StylePyramid pyr;
  const int H = style.rgb.dim(0), W = style.rgb.dim(1);
  for (double s : layout.scales) {
    int h = static_cast<int>(std::lround(H * s));
    int w = static_cast<int>(std::lround(W * s));
    if (h < 8 || w < 8) {
      h = std::max(h, 8);
      w = std::max(w, 8);
      if (warnings)
        warnings->push_back("style pyramid level clamped to " + std::to_string(w) + "x" +
                            std::to_string(h));
    }
    StylePair level;
    level.rgb = resample_area(style.rgb, h, w);
    level.depth = resample_area(style.depth, h, w);
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

/// Per-pixel bin assignment by nearest center; ties go to the nearer
/// (smaller-index) bin. Expects camera-forward z-depth values.
inline std::vector<int> assign_pixels(const Tensor& z_depth, const BinLayout& layout) {
  VXS_CHECK(z_depth.all_finite(), InvalidInput, "assign_pixels: non-finite depth");
  std::vector<int> out(static_cast<size_t>(z_depth.numel()), 0);
  for (int64_t i = 0; i < z_depth.numel(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int bb = 0;
    for (int b = 0; b < layout.bins(); ++b) {
      double d = std::abs(z_depth[i] - layout.centers[static_cast<size_t>(b)]);
      if (d < best) {
        best = d;
        bb = b;
      }
    }
    out[static_cast<size_t>(i)] = bb;
  }
  return out;
}

/// Dominant bin per feature position: majority vote over the position's
/// f x f pixel footprint, ties to the smaller bin index.
inline std::vector<int> feature_position_bins(const std::vector<int>& pixel_bins, int img_h,
                                              int img_w, int feat_h, int feat_w, int factor,
                                              int n_bins) {
  std::vector<int> out(static_cast<size_t>(feat_h) * feat_w, 0);
  std::vector<int> votes(static_cast<size_t>(n_bins));
  for (int y = 0; y < feat_h; ++y)
    for (int x = 0; x < feat_w; ++x) {
      std::fill(votes.begin(), votes.end(), 0);
      int y1 = std::min(img_h, (y + 1) * factor), x1 = std::min(img_w, (x + 1) * factor);
      for (int py = y * factor; py < y1; ++py)
        for (int px = x * factor; px < x1; ++px)
          ++votes[static_cast<size_t>(pixel_bins[static_cast<size_t>(py) * img_w + px])];
      int best = 0;
      for (int b = 1; b < n_bins; ++b)
        if (votes[static_cast<size_t>(b)] > votes[static_cast<size_t>(best)]) best = b;
      out[static_cast<size_t>(y) * feat_w + x] = best;
    }
  return out;
}

/// Style features per pyramid level, extracted once per level for both
/// modalities (levels differ in resolution, so sharing is not possible).
struct StyleLevelFeatures {
  struct Layer {
    std::string name;
    int factor = 1;
    Tensor rgb_map;    // [h,w,C]
    Tensor depth_map;  // [h,w,C]
  };
  std::vector<Layer> layers;
};

inline StyleLevelFeatures compute_style_features(const StylePair& style,
                                                 const FeatureExtractor& extractor) {
  StyleLevelFeatures out;
  FeatureMap rgb = extractor.extract(style.rgb);
  FeatureMap dep = extractor.extract(depth_style_input(style.depth));
  for (size_t l = 0; l < rgb.layers.size(); ++l) {
    StyleLevelFeatures::Layer layer;
    layer.name = rgb.layers[l].name;
    layer.factor = rgb.layers[l].factor;
    layer.rgb_map = rgb.layers[l].map.val();
    layer.depth_map = dep.layers[l].map.val();
    out.layers.push_back(std::move(layer));
  }
  return out;
}

struct LayeredLossConfig {
  bool use_geometry_aware = true;
  bool use_patch = true;
  int patch_k = 2;
  int patch_r = 1;
  int patch_stride = 0;  // 0 -> disjoint partition
  double depth_term_weight = 1.0;
  double patch_weight = 1.0;
  double geometry_weight = 1.0;
};

/// Depth-layered style loss: content feature positions are grouped by the
/// dominant bin of their pixel footprint and each group is matched against
/// its bin's downsampled style pair; bin contributions are combined with
/// position-count weights. With a single bin this reduces exactly to the
/// unaugmented loss on the original style pair.
inline ad::Var layered_style_loss(const FeatureMap& content_rgb, const FeatureMap& content_depth,
                                  const Tensor& z_depth, const BinLayout& layout,
                                  const std::vector<StyleLevelFeatures>& style_levels,
                                  const LayeredLossConfig& cfg) {
  VXS_CHECK(static_cast<int>(style_levels.size()) == layout.bins(), InvalidInput,
            "layered_style_loss: style levels do not match layout bins");
  std::vector<int> pixel_bins = assign_pixels(z_depth, layout);
  const int img_h = z_depth.dim(0), img_w = z_depth.dim(1);
  const int n_bins = layout.bins();

  ad::Var total = ad::constant(Tensor::scalar(0.0));
  for (size_t l = 0; l < content_rgb.layers.size(); ++l) {
    const auto& crl = content_rgb.layers[l];
    const auto& cdl = content_depth.layers[l];
    const int fh = crl.map.val().dim(0), fw = crl.map.val().dim(1);
    std::vector<int> pos_bins =
        feature_position_bins(pixel_bins, img_h, img_w, fh, fw, crl.factor, n_bins);

    ad::Var rgb_rows = as_rows(crl.map);
    ad::Var depth_rows = as_rows(cdl.map);

    if (cfg.use_geometry_aware) {
      ad::Var layer_sum = ad::constant(Tensor::scalar(0.0));
      int total_count = 0;
      for (int b = 0; b < n_bins; ++b) {
        std::vector<int> subset;
        for (int p = 0; p < fh * fw; ++p)
          if (pos_bins[static_cast<size_t>(p)] == b) subset.push_back(p);
        if (subset.empty()) continue;  // empty bins contribute exactly zero
        const auto& sl = style_levels[static_cast<size_t>(b)].layers[l];
        Tensor srows({sl.rgb_map.dim(0) * sl.rgb_map.dim(1), sl.rgb_map.dim(2)},
                     sl.rgb_map.data);
        Tensor sdrows({sl.depth_map.dim(0) * sl.depth_map.dim(1), sl.depth_map.dim(2)},
                      sl.depth_map.data);
        StyleLoss part = geometry_aware_loss(rgb_rows, depth_rows, srows, sdrows,
                                             cfg.depth_term_weight, &subset);
        layer_sum = ad::add(layer_sum,
                            ad::scale(part.loss, static_cast<double>(subset.size())));
        total_count += static_cast<int>(subset.size());
      }
      if (total_count > 0)
        total = ad::add(total, ad::scale(layer_sum, cfg.geometry_weight / total_count));
    }

    if (cfg.use_patch) {
      PatchSet pc = extract_patches(fh, fw, cfg.patch_k, cfg.patch_r, cfg.patch_stride);
      // patch -> bin by majority over member positions, ties to smaller bin
      std::vector<int> patch_bins(static_cast<size_t>(pc.count()), 0);
      std::vector<int> votes(static_cast<size_t>(n_bins));
      for (int p = 0; p < pc.count(); ++p) {
        std::fill(votes.begin(), votes.end(), 0);
        for (int m = 0; m < pc.members(); ++m)
          ++votes[static_cast<size_t>(
              pos_bins[static_cast<size_t>(pc.positions[size_t(p) * pc.members() + m])])];
        int best = 0;
        for (int b = 1; b < n_bins; ++b)
          if (votes[static_cast<size_t>(b)] > votes[static_cast<size_t>(best)]) best = b;
        patch_bins[static_cast<size_t>(p)] = best;
      }

      for (int modality = 0; modality < 2; ++modality) {
        ad::Var layer_sum = ad::constant(Tensor::scalar(0.0));
        int total_count = 0;
        const ad::Var& cmap = modality == 0 ? crl.map : cdl.map;
        for (int b = 0; b < n_bins; ++b) {
          std::vector<int> subset;
          for (int p = 0; p < pc.count(); ++p)
            if (patch_bins[static_cast<size_t>(p)] == b) subset.push_back(p);
          if (subset.empty()) continue;
          const auto& sl = style_levels[static_cast<size_t>(b)].layers[l];
          const Tensor& smap = modality == 0 ? sl.rgb_map : sl.depth_map;
          int ext = (cfg.patch_k - 1) * cfg.patch_r + 1;
          if (smap.dim(0) < ext || smap.dim(1) < ext) continue;  // level too small
          PatchSet ps =
              extract_patches(smap.dim(0), smap.dim(1), cfg.patch_k, cfg.patch_r,
                              cfg.patch_stride);
          StyleLoss part = patch_loss(cmap, smap, pc, ps, &subset);
          layer_sum =
              ad::add(layer_sum, ad::scale(part.loss, static_cast<double>(subset.size())));
          total_count += static_cast<int>(subset.size());
        }
        if (total_count > 0)
          total = ad::add(total, ad::scale(layer_sum, cfg.patch_weight / total_count));
      }
    }
  }
  return total;
}

}  // namespace vxs
