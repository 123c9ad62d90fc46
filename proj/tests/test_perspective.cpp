#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "vxs/scene/synthetic.hpp"
#include "vxs/style/perspective.hpp"

using namespace vxs;

namespace {

/// Two fronto-parallel half-planes at camera-forward depths 2 and 6.
struct TwoPlaneScene {
  RadianceField field;
  Camera camera;
  SyntheticSceneSpec spec;
};

TwoPlaneScene make_two_plane_scene(int image_size = 48) {
  SyntheticSceneSpec spec;
  spec.bounds_min = {-3, -3, -7};
  spec.bounds_max = {3, 3, 1};
  spec.resolution = {48, 48, 64};
  spec.max_density = 400.0;
  spec.shell_voxels = 0.02;

  Primitive near_plane;
  near_plane.kind = Primitive::Kind::box;
  near_plane.center = {-1.5, 0, -1.06};
  near_plane.size = {1.5, 3, 0.06};  // front face at z = -1 -> depth 2
  near_plane.albedo = {0.9, 0.2, 0.2};

  Primitive far_plane = near_plane;
  far_plane.center = {1.5, 0, -5.06};
  far_plane.size = {1.5, 3, 0.06};  // front face at z = -5 -> depth 6
  far_plane.albedo = {0.2, 0.2, 0.9};

  spec.primitives = {near_plane, far_plane};

  TwoPlaneScene out;
  out.spec = spec;
  out.field = voxelize(spec);
  out.camera = Camera::look_at({0, 0, 1}, {0, 0, -5}, {0, 1, 0},
                               static_cast<double>(image_size), image_size, image_size);
  return out;
}

Tensor random_image(Rng& rng, int h, int w) {
  Tensor t({h, w, 3});
  for (auto& v : t.data) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("scales follow s_i = C_1 / C_i") {
  auto s = scales_from_centers({2.0, 4.0, 8.0});
  REQUIRE(s[0] == 1.0);
  REQUIRE(s[1] == Catch::Approx(0.5));
  REQUIRE(s[2] == Catch::Approx(0.25));
}

TEST_CASE("bin layout construction") {
  TwoPlaneScene scene = make_two_plane_scene();

  SECTION("N = 1 gives a single unit-scale bin") {
    BinLayout layout = build_bin_layout(scene.field, {scene.camera}, 1);
    REQUIRE(layout.bins() == 1);
    REQUIRE(layout.scales[0] == 1.0);
    REQUIRE_FALSE(layout.degenerate_fallback);
  }

  SECTION("N = 2 recovers the two plane depths") {
    BinLayout layout = build_bin_layout(scene.field, {scene.camera}, 2);
    REQUIRE(layout.bins() == 2);
    REQUIRE(std::abs(layout.centers[0] - 2.0) / 2.0 < 0.05);
    REQUIRE(std::abs(layout.centers[1] - 6.0) / 6.0 < 0.05);
    REQUIRE(layout.scales[0] == 1.0);
    REQUIRE(layout.scales[1] == Catch::Approx(layout.centers[0] / layout.centers[1]));
    // s decreases with depth
    REQUIRE(layout.scales[1] < 1.0);
  }

  SECTION("degenerate single-depth scene falls back to one bin") {
    SyntheticSceneSpec spec = scene.spec;
    spec.primitives = {scene.spec.primitives[0]};
    spec.primitives[0].center = {0, 0, -1.06};
    spec.primitives[0].size = {3, 3, 0.06};
    RadianceField flat = voxelize(spec);
    BinLayout layout = build_bin_layout(flat, {scene.camera}, 3);
    REQUIRE(layout.bins() <= 2);  // near-constant depths collapse
    REQUIRE(layout.scales[0] == 1.0);
  }

  SECTION("layout json round trip") {
    BinLayout layout = build_bin_layout(scene.field, {scene.camera}, 2);
    nlohmann::json j = layout;
    BinLayout back = j.get<BinLayout>();
    REQUIRE(back.centers == layout.centers);
    REQUIRE(back.scales == layout.scales);
  }
}

TEST_CASE("style pyramid") {
  Rng rng(401);
  StylePair style;
  style.rgb = random_image(rng, 64, 64);
  style.depth = Tensor({64, 64});
  for (auto& v : style.depth.data) v = rng.uniform(1.0, 5.0);

  SECTION("unit scale level is bit-exact") {
    BinLayout layout;
    layout.centers = {2.0, 4.0};
    layout.scales = {1.0, 0.5};
    StylePyramid pyr = build_style_pyramid(style, layout);
    REQUIRE(pyr.levels.size() == 2);
    for (int64_t i = 0; i < style.rgb.numel(); ++i)
      REQUIRE(pyr.level(0).rgb[i] == style.rgb[i]);
    REQUIRE(pyr.level(1).rgb.dim(0) == 32);
    REQUIRE(pyr.level(1).rgb.dim(1) == 32);
    REQUIRE(pyr.level(1).depth.dim(0) == 32);
  }

  SECTION("constant style stays constant at every level") {
    StylePair flat;
    flat.rgb = Tensor::full({40, 40, 3}, 0.0);
    for (int64_t i = 0; i < 40 * 40; ++i) {
      flat.rgb[i * 3] = 0.3;
      flat.rgb[i * 3 + 1] = 0.6;
      flat.rgb[i * 3 + 2] = 0.9;
    }
    flat.depth = Tensor::full({40, 40}, 2.5);
    BinLayout layout;
    layout.centers = {1.0, 3.0};
    layout.scales = {1.0, 1.0 / 3.0};
    StylePyramid pyr = build_style_pyramid(flat, layout);
    for (const auto& level : pyr.levels) {
      for (int64_t i = 0; i < level.rgb.numel() / 3; ++i) {
        REQUIRE(level.rgb[i * 3] == Catch::Approx(0.3));
        REQUIRE(level.rgb[i * 3 + 1] == Catch::Approx(0.6));
        REQUIRE(level.rgb[i * 3 + 2] == Catch::Approx(0.9));
      }
      for (double v : level.depth.data) REQUIRE(v == Catch::Approx(2.5));
    }
  }

  SECTION("tiny levels clamp to 8x8 with a warning") {
    BinLayout layout;
    layout.centers = {1.0, 100.0};
    layout.scales = {1.0, 0.01};
    std::vector<std::string> warnings;
    StylePyramid pyr = build_style_pyramid(style, layout, &warnings);
    REQUIRE(pyr.level(1).rgb.dim(0) == 8);
    REQUIRE_FALSE(warnings.empty());
  }
}

TEST_CASE("pixel assignment") {
  BinLayout layout;
  layout.centers = {2.0, 6.0};
  layout.scales = {1.0, 2.0 / 6.0};

  SECTION("nearest center wins, ties to the nearer bin") {
    Tensor z({1, 3});
    z[0] = 3.0;  // nearer to 2
    z[1] = 4.0;  // equidistant -> bin 0
    z[2] = 5.9;
    auto bins = assign_pixels(z, layout);
    REQUIRE(bins[0] == 0);
    REQUIRE(bins[1] == 0);
    REQUIRE(bins[2] == 1);
  }

  SECTION("every pixel gets exactly one in-range bin") {
    Rng rng(409);
    Tensor z({16, 16});
    for (auto& v : z.data) v = rng.uniform(0.0, 10.0);
    auto bins = assign_pixels(z, layout);
    REQUIRE(bins.size() == 256);
    for (int b : bins) {
      REQUIRE(b >= 0);
      REQUIRE(b < 2);
    }
  }

  SECTION("two-plane scene assignment matches the plane masks") {
    TwoPlaneScene scene = make_two_plane_scene();
    RenderOptions opt;
    opt.n_samples = 128;
    opt.use_deformation = false;
    ViewRender r = render_view(scene.field, scene.camera, opt);
    Tensor z = ray_depth_to_z(r.depth, scene.camera);
    BinLayout built = build_bin_layout(scene.field, {scene.camera}, 2);
    auto bins = assign_pixels(z, built);
    const int W = scene.camera.width;
    int wrong = 0, checked = 0;
    for (int y = 4; y < scene.camera.height - 4; ++y)
      for (int x = 4; x < W - 4; ++x) {
        if (r.alpha[int64_t(y) * W + x] < 0.9) continue;
        // pixels left of center see the near plane, right the far plane
        if (std::abs(x + 0.5 - scene.camera.cx) < 1.5) continue;  // skip the seam
        int want = (x + 0.5 < scene.camera.cx) ? 0 : 1;
        checked++;
        if (bins[static_cast<size_t>(y) * W + x] != want) wrong++;
      }
    REQUIRE(checked > 500);
    REQUIRE(wrong == 0);
  }
}

TEST_CASE("layered style loss") {
  Rng rng(421);
  TwoPlaneScene scene = make_two_plane_scene(48);
  FeatureExtractor fe = FeatureExtractor::fallback(42);

  RenderOptions opt;
  opt.n_samples = 96;
  opt.use_deformation = false;
  ViewRender r = render_view(scene.field, scene.camera, opt);

  StylePair style;
  style.rgb = random_image(rng, 48, 48);
  style.depth = Tensor({48, 48});
  for (auto& v : style.depth.data) v = rng.uniform(1.0, 7.0);

  ad::Var rgb = ad::constant(r.rgb);
  ad::Var depth = ad::constant(r.depth);
  FeatureMap content_rgb = fe.extract(rgb);
  FeatureMap content_depth = fe.extract(depth_style_input(depth));
  Tensor z = ray_depth_to_z(r.depth, scene.camera);

  LayeredLossConfig cfg;
  cfg.patch_k = 2;
  cfg.patch_r = 1;

  SECTION("single bin reduces to the unaugmented loss") {
    BinLayout layout;
    layout.centers = {4.0};
    layout.scales = {1.0};
    StylePyramid pyr = build_style_pyramid(style, layout);
    std::vector<StyleLevelFeatures> levels = {compute_style_features(pyr.level(0), fe)};
    double got = layered_style_loss(content_rgb, content_depth, z, layout, levels, cfg)
                     .scalar();

    // independent unaugmented computation straight from the loss module
    double want = 0.0;
    for (size_t l = 0; l < content_rgb.layers.size(); ++l) {
      const auto& sl = levels[0].layers[l];
      Tensor srows({sl.rgb_map.dim(0) * sl.rgb_map.dim(1), sl.rgb_map.dim(2)}, sl.rgb_map.data);
      Tensor sdrows({sl.depth_map.dim(0) * sl.depth_map.dim(1), sl.depth_map.dim(2)},
                    sl.depth_map.data);
      want += geometry_aware_loss(as_rows(content_rgb.layers[l].map),
                                  as_rows(content_depth.layers[l].map), srows, sdrows)
                  .loss.scalar();
      const Tensor& cmap = content_rgb.layers[l].map.val();
      PatchSet pc = extract_patches(cmap.dim(0), cmap.dim(1), 2, 1);
      PatchSet ps = extract_patches(sl.rgb_map.dim(0), sl.rgb_map.dim(1), 2, 1);
      want += patch_loss(content_rgb.layers[l].map, sl.rgb_map, pc, ps).loss.scalar();
      PatchSet psd = extract_patches(sl.depth_map.dim(0), sl.depth_map.dim(1), 2, 1);
      want += patch_loss(content_depth.layers[l].map, sl.depth_map, pc, psd).loss.scalar();
    }
    REQUIRE(std::abs(got - want) < 1e-6);
  }

  SECTION("a bin with no assigned positions contributes exactly zero") {
    BinLayout two;
    two.centers = {2.0, 6.0};
    two.scales = scales_from_centers(two.centers);
    BinLayout three;
    three.centers = {2.0, 6.0, 1000.0};  // nothing can be nearest to 1000
    three.scales = scales_from_centers(three.centers);
    StylePyramid pyr2 = build_style_pyramid(style, two);
    StylePyramid pyr3 = build_style_pyramid(style, three);
    std::vector<StyleLevelFeatures> lv2 = {compute_style_features(pyr2.level(0), fe),
                                           compute_style_features(pyr2.level(1), fe)};
    std::vector<StyleLevelFeatures> lv3 = {compute_style_features(pyr3.level(0), fe),
                                           compute_style_features(pyr3.level(1), fe),
                                           compute_style_features(pyr3.level(2), fe)};
    double a = layered_style_loss(content_rgb, content_depth, z, two, lv2, cfg).scalar();
    double b = layered_style_loss(content_rgb, content_depth, z, three, lv3, cfg).scalar();
    REQUIRE(a == Catch::Approx(b).margin(1e-12));
  }

  SECTION("per-bin contributions match independently computed masked losses") {
    BinLayout layout = build_bin_layout(scene.field, {scene.camera}, 2);
    StylePyramid pyr = build_style_pyramid(style, layout);
    std::vector<StyleLevelFeatures> levels = {compute_style_features(pyr.level(0), fe),
                                              compute_style_features(pyr.level(1), fe)};
    LayeredLossConfig ga_only = cfg;
    ga_only.use_patch = false;
    double got =
        layered_style_loss(content_rgb, content_depth, z, layout, levels, ga_only).scalar();

    auto pixel_bins = assign_pixels(z, layout);
    double want = 0.0;
    for (size_t l = 0; l < content_rgb.layers.size(); ++l) {
      const auto& crl = content_rgb.layers[l];
      int fh = crl.map.val().dim(0), fw = crl.map.val().dim(1);
      auto pos_bins = feature_position_bins(pixel_bins, 48, 48, fh, fw, crl.factor, 2);
      double layer_sum = 0.0;
      int total = 0;
      for (int b = 0; b < 2; ++b) {
        std::vector<int> subset;
        for (int p = 0; p < fh * fw; ++p)
          if (pos_bins[static_cast<size_t>(p)] == b) subset.push_back(p);
        if (subset.empty()) continue;
        const auto& sl = levels[static_cast<size_t>(b)].layers[l];
        Tensor srows({sl.rgb_map.dim(0) * sl.rgb_map.dim(1), sl.rgb_map.dim(2)},
                     sl.rgb_map.data);
        Tensor sdrows({sl.depth_map.dim(0) * sl.depth_map.dim(1), sl.depth_map.dim(2)},
                      sl.depth_map.data);
        double part = geometry_aware_loss(as_rows(crl.map),
                                          as_rows(content_depth.layers[l].map), srows, sdrows,
                                          1.0, &subset)
                          .loss.scalar();
        layer_sum += part * static_cast<double>(subset.size());
        total += static_cast<int>(subset.size());
      }
      want += layer_sum / total;
    }
    REQUIRE(std::abs(got - want) < 1e-9);
  }
}
