#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "vxs/render/renderer.hpp"
#include "vxs/scene/synthetic.hpp"

using namespace vxs;

TEST_CASE("ray generation follows the pinhole convention") {
  SECTION("principal point maps to camera -z") {
    Camera cam;
    cam.cx = 17.0;
    cam.cy = 9.0;
    RayBatch rb = generate_rays(cam, {{17.0, 9.0}});
    REQUIRE(rb.directions[0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(rb.directions[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(rb.directions[2] == Catch::Approx(-1.0).margin(1e-12));
  }
  SECTION("principal point through a rotated pose") {
    Camera cam = Camera::look_at({1, 2, 3}, {1, 5, 3}, {0, 0, 1}, 80.0, 64, 64);
    RayBatch rb = generate_rays(cam, {{cam.cx, cam.cy}});
    // looking along +y from the eye
    REQUIRE(rb.directions[0] == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(rb.directions[1] == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(rb.directions[2] == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("one focal length right of center") {
    Camera cam;
    RayBatch rb = generate_rays(cam, {{cam.cx + cam.fx, cam.cy}});
    double inv = 1.0 / std::sqrt(2.0);
    REQUIRE(rb.directions[0] == Catch::Approx(inv).margin(1e-12));
    REQUIRE(rb.directions[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(rb.directions[2] == Catch::Approx(-inv).margin(1e-12));
  }
  SECTION("all directions are unit length") {
    Rng rng(3);
    Camera cam = Camera::look_at({0.3, -1.2, 2.0}, {0, 0, 0}, {0, 1, 0}, 90.0, 100, 100);
    RayBatch rb = generate_rays(cam);
    REQUIRE(rb.directions.dim(0) == 10000);
    for (int i = 0; i < 10000; ++i) {
      double n = 0.0;
      for (int k = 0; k < 3; ++k) {
        double d = rb.directions[int64_t(i) * 3 + k];
        n += d * d;
      }
      REQUIRE(std::abs(std::sqrt(n) - 1.0) < 1e-6);
    }
  }
}

namespace {

RaySampleBatch uniform_batch(int S, double near, double far, double sigma, Vec3 color) {
  RaySampleBatch b;
  b.n_rays = 1;
  b.n_samples = S;
  b.t = Tensor({1, S});
  b.delta = Tensor({1, S});
  b.sigma = Tensor({1, S});
  b.color = Tensor({1, S, 3});
  b.t_far = Tensor({1});
  double bin = (far - near) / S;
  for (int s = 0; s < S; ++s) {
    b.t[s] = near + (s + 0.5) * bin;
    b.delta[s] = (s == S - 1) ? far - b.t[s] : bin;
    b.sigma[s] = sigma;
    for (int c = 0; c < 3; ++c) b.color[int64_t(s) * 3 + c] = color[size_t(c)];
  }
  return b;
}

}  // namespace

TEST_CASE("compositing matches closed forms") {
  SECTION("zero density yields background and t_far") {
    RaySampleBatch b = uniform_batch(32, 0.5, 2.5, 0.0, {0.2, 0.4, 0.6});
    CompositeResult r = composite(b, {0.9, 0.8, 0.7});
    REQUIRE(r.rgb[0] == 0.9);
    REQUIRE(r.rgb[1] == 0.8);
    REQUIRE(r.rgb[2] == 0.7);
    REQUIRE(r.depth[0] == b.t_far[0]);
    REQUIRE(r.alpha[0] == 0.0);
  }
  SECTION("homogeneous medium matches the analytic emitter-absorber solution") {
    double sigma = 1.7, L = 2.0, bg = 0.25, c = 0.65;
    RaySampleBatch b = uniform_batch(256, 1.0, 1.0 + L, sigma, {c, c, c});
    b.t_far[0] = 1.0 + L;
    CompositeResult r = composite(b, {bg, bg, bg});
    double want = oracle::homogeneous_rgb(sigma, c, L, bg);
    for (int k = 0; k < 3; ++k) REQUIRE(std::abs(r.rgb[k] - want) / want < 0.01);
  }
  SECTION("a single opaque sample pins expected depth") {
    RaySampleBatch b = uniform_batch(64, 0.0, 4.0, 0.0, {1, 0, 0});
    int hit = 37;
    b.sigma[hit] = 1e4;  // sigma * delta >> 1
    b.t_far[0] = 4.0;
    CompositeResult r = composite(b, {0, 0, 0});
    REQUIRE(std::abs(r.depth[0] - b.t[hit]) <= b.delta[hit] + 1e-12);
  }
  SECTION("non-increasing sample depths are rejected") {
    RaySampleBatch b = uniform_batch(8, 1.0, 2.0, 0.5, {1, 1, 1});
    std::swap(b.t[2], b.t[3]);
    REQUIRE_THROWS_AS(composite(b, {0, 0, 0}), InvalidInput);
  }
}

TEST_CASE("weight invariants hold for random densities") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    int S = 16 + rng.uniform_int(48);
    RaySampleBatch b = uniform_batch(S, 0.5, 3.0, 0.0, {1, 1, 1});
    for (int s = 0; s < S; ++s) b.sigma[s] = std::abs(rng.normal()) * 3.0;
    CompositeResult r = composite(b, {0, 0, 0});
    double wsum = 0.0;
    for (int s = 0; s < S; ++s) {
      REQUIRE(r.weights[s] >= 0.0);
      REQUIRE(r.weights[s] <= 1.0);
      wsum += r.weights[s];
    }
    REQUIRE(wsum >= 0.0);
    REQUIRE(wsum <= 1.0 + 1e-12);
  }
}

TEST_CASE("moving an opaque sample earlier never decreases its weight") {
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    int S = 24;
    RaySampleBatch b = uniform_batch(S, 0.5, 3.0, 0.0, {1, 1, 1});
    for (int s = 0; s < S; ++s) b.sigma[s] = std::abs(rng.normal()) * 2.0;
    int i = 4 + rng.uniform_int(S - 4);
    int j = rng.uniform_int(i);  // j < i
    double big = 40.0;
    b.sigma[i] = big;
    double w_at_i = composite(b, {0, 0, 0}).weights[i];
    b.sigma[i] = std::abs(rng.normal()) * 2.0;
    b.sigma[j] = big;
    double w_at_j = composite(b, {0, 0, 0}).weights[j];
    REQUIRE(w_at_j >= w_at_i - 1e-12);
  }
}

namespace {

SyntheticSceneSpec two_tone_sphere_spec() {
  SyntheticSceneSpec spec;
  Primitive p;
  p.kind = Primitive::Kind::sphere;
  p.center = {0, 0, 0};
  p.size = {0.5, 0.5, 0.5};
  p.albedo = {0.9, 0.15, 0.1};
  p.albedo2 = {0.1, 0.2, 0.9};
  p.texture = 2;  // two-tone split at x = 0
  spec.primitives = {p};
  spec.resolution = {48, 48, 48};
  spec.background = {1, 1, 1};
  return spec;
}

}  // namespace

TEST_CASE("render_view with zero deformation is bit-exact against no deformation") {
  RadianceField f = voxelize(two_tone_sphere_spec());
  f.init_deformation_zero();
  Camera cam = Camera::look_at({0, 0, 2.6}, {0, 0, 0}, {0, 1, 0}, 40.0, 24, 24);
  RenderOptions opt;
  opt.n_samples = 48;
  opt.use_deformation = true;
  ViewRender a = render_view(f, cam, opt);
  opt.use_deformation = false;
  ViewRender b = render_view(f, cam, opt);
  for (int64_t i = 0; i < a.rgb.numel(); ++i) REQUIRE(a.rgb[i] == b.rgb[i]);
  for (int64_t i = 0; i < a.depth.numel(); ++i) REQUIRE(a.depth[i] == b.depth[i]);
}

TEST_CASE("constant deformation renders the field translated the opposite way") {
  SyntheticSceneSpec spec = two_tone_sphere_spec();
  RadianceField f = voxelize(spec);
  auto cell = f.density.spec.cell_size();
  // whole-voxel translation so the shifted voxelization is exact
  Vec3 shift{2.0 * cell[0], 0.0, -1.0 * cell[2]};

  for (size_t i = 0; i < f.deformation.dense.size(); i += 3) {
    f.deformation.dense[i] = static_cast<float>(shift[0]);
    f.deformation.dense[i + 1] = static_cast<float>(shift[1]);
    f.deformation.dense[i + 2] = static_cast<float>(shift[2]);
  }

  SyntheticSceneSpec shifted = spec;
  shifted.primitives[0].center = {-shift[0], -shift[1], -shift[2]};
  RadianceField g = voxelize(shifted);

  Camera cam = Camera::look_at({0, 0, 2.6}, {0, 0, 0}, {0, 1, 0}, 40.0, 32, 32);
  RenderOptions opt;
  opt.n_samples = 96;
  opt.use_deformation = true;
  ViewRender deformed = render_view(f, cam, opt);
  opt.use_deformation = false;
  ViewRender reference = render_view(g, cam, opt);

  double mae = 0.0;
  for (int64_t i = 0; i < deformed.rgb.numel(); ++i)
    mae += std::abs(deformed.rgb[i] - reference.rgb[i]);
  mae /= double(deformed.rgb.numel());
  REQUIRE(mae < 1e-3);
}

TEST_CASE("deformation keeps surface colors sourced from the canonical surface") {
  // Rigid translation of a two-tone sphere: each deformed surface pixel must
  // show the canonical color of its pre-image, i.e. the two-tone split moves
  // with the object instead of being re-sampled from static space.
  SyntheticSceneSpec spec = two_tone_sphere_spec();
  RadianceField f = voxelize(spec);
  auto cell = f.density.spec.cell_size();
  Vec3 shift{4.0 * cell[0], 0.0, 0.0};
  for (size_t i = 0; i < f.deformation.dense.size(); i += 3)
    f.deformation.dense[i] = static_cast<float>(shift[0]);

  Camera cam = Camera::look_at({0, 0, 2.6}, {0, 0, 0}, {0, 1, 0}, 48.0, 48, 48);
  RenderOptions opt;
  opt.n_samples = 96;
  opt.use_deformation = true;
  ViewRender deformed = render_view(f, cam, opt);

  SyntheticSceneSpec shifted = spec;
  shifted.primitives[0].center = {-shift[0], 0, 0};
  // the two-tone boundary travels with the object
  shifted.primitives[0].texture = 2;
  RadianceField g = voxelize(shifted);
  // texture=2 splits at the primitive center, so the palette follows the move
  opt.use_deformation = false;
  ViewRender reference = render_view(g, cam, opt);

  double mae = 0.0;
  int count = 0;
  for (int64_t i = 0; i < deformed.alpha.numel(); ++i) {
    if (deformed.alpha[i] > 0.5 && reference.alpha[i] > 0.5) {
      for (int c = 0; c < 3; ++c) mae += std::abs(deformed.rgb[i * 3 + c] - reference.rgb[i * 3 + c]);
      count += 3;
    }
  }
  REQUIRE(count > 0);
  mae /= count;
  REQUIRE(mae < 1e-2);
}

TEST_CASE("opaque plane depth matches the analytic distance") {
  SyntheticSceneSpec spec;
  Primitive p;
  p.kind = Primitive::Kind::box;
  p.center = {0, 0, 0};
  // front face exactly on a voxel edge (3 cells at 64^3 over [-1,1])
  p.size = {0.85, 0.85, 0.09375};
  p.albedo = {0.5, 0.7, 0.2};
  spec.primitives = {p};
  spec.resolution = {64, 64, 64};
  spec.max_density = 400.0;
  spec.shell_voxels = 0.02;  // hard step; interpolation provides the ramp
  RadianceField f = voxelize(spec);

  double eye_z = 2.4;
  Camera cam = Camera::look_at({0, 0, eye_z}, {0, 0, 0}, {0, 1, 0}, 90.0, 32, 32);
  RenderOptions opt;
  opt.n_samples = 128;
  opt.use_deformation = false;
  ViewRender r = render_view(f, cam, opt);

  double want = eye_z - p.size[2];
  // check the central 8x8 block (fronto-parallel region) against each
  // ray's own sample interval
  for (int y = 12; y < 20; ++y)
    for (int x = 12; x < 20; ++x) {
      Vec3 dir = cam.pixel_ray(x + 0.5, y + 0.5);
      double t0, t1;
      REQUIRE(ray_box(cam.position, dir, {-1, -1, -1}, {1, 1, 1}, t0, t1));
      double interval = (t1 - t0) / opt.n_samples;
      double got = r.depth[int64_t(y) * 32 + x];
      REQUIRE(std::abs(got - want) < interval + 1e-9);
    }
}

TEST_CASE("zero-density field renders background exactly") {
  RadianceField::Options o;
  o.resolution = {8, 8, 8};
  o.density_init = -10000.0f;  // softplus underflows to exactly zero
  RadianceField f = RadianceField::create(o);
  f.background = {0.3, 0.55, 0.8};
  Camera cam = Camera::look_at({0, 0, 2.5}, {0, 0, 0}, {0, 1, 0}, 30.0, 16, 16);
  RenderOptions opt;
  opt.n_samples = 32;
  ViewRender r = render_view(f, cam, opt);
  for (int64_t i = 0; i < int64_t(16) * 16; ++i) {
    REQUIRE(r.rgb[i * 3 + 0] == 0.3);
    REQUIRE(r.rgb[i * 3 + 1] == 0.55);
    REQUIRE(r.rgb[i * 3 + 2] == 0.8);
    REQUIRE(r.alpha[i] == 0.0);
  }
}

TEST_CASE("degenerate near/far overrides are a configuration error") {
  RadianceField::Options o;
  o.resolution = {8, 8, 8};
  RadianceField f = RadianceField::create(o);
  Camera cam = Camera::look_at({0, 0, 2.5}, {0, 0, 0}, {0, 1, 0}, 30.0, 4, 4);
  RenderOptions opt;
  opt.near_override = 3.0;
  opt.far_override = 2.0;
  REQUIRE_THROWS_AS(render_view(f, cam, opt), ConfigError);
  opt.near_override = 0.0;
  opt.far_override = 0.0;
  opt.n_samples = 1;
  REQUIRE_THROWS_AS(render_view(f, cam, opt), ConfigError);
}

TEST_CASE("pixel gradients match finite differences through the renderer") {
  Rng rng(211);
  RadianceField::Options o;
  o.resolution = {6, 6, 6};
  o.density_init = -1.0f;
  RadianceField f = RadianceField::create(o);
  for (auto& v : f.density.dense) v = static_cast<float>(rng.normal());
  for (auto& v : f.color.dense) v = static_cast<float>(rng.normal() * 0.5);
  for (auto& v : f.deformation.dense) v = static_cast<float>(rng.normal() * 0.03);

  Camera cam = Camera::look_at({0.1, -0.2, 2.2}, {0, 0, 0}, {0, 1, 0}, 8.0, 4, 4);
  RenderOptions opt;
  opt.n_samples = 24;
  opt.use_deformation = true;

  Tensor pixw({4, 4, 3});
  for (auto& v : pixw.data) v = rng.normal();

  auto forward = [&]() {
    FieldVars fv = lift(f, false, false, false);
    ViewRenderVars v = render_view_vars(fv, f, cam, opt);
    return ad::sum(ad::mul(v.rgb, ad::constant(pixw))).scalar();
  };

  FieldVars fv = lift(f, true, true, true);
  ViewRenderVars v = render_view_vars(fv, f, cam, opt);
  ad::Var loss = ad::sum(ad::mul(v.rgb, ad::constant(pixw)));
  ad::backward(loss);

  struct Probe {
    std::vector<float>* arr;
    const Tensor* grad;
    const char* name;
  };
  std::vector<Probe> probes = {
      {&f.density.dense, &fv.density.params[0].grad(), "density"},
      {&f.color.dense, &fv.color.params[0].grad(), "color"},
      {&f.deformation.dense, &fv.deformation.params[0].grad(), "deformation"},
  };
  for (auto& pr : probes) {
    INFO(pr.name);
    int checked = 0;
    for (size_t i = 0; i < pr.arr->size() && checked < 12; i += pr.arr->size() / 17 + 1) {
      double analytic = (*pr.grad)[int64_t(i)];
      auto fd = oracle::fd_float_checked(forward, (*pr.arr)[i], 1e-4);
      if (!fd.reliable) continue;  // perturbation crossed a cell boundary
      if (std::abs(fd.value) < 1e-8 && std::abs(analytic) < 1e-8) continue;
      REQUIRE(oracle::rel_err(analytic, fd.value) < 1e-3);
      ++checked;
    }
    REQUIRE(checked > 0);
  }
}

TEST_CASE("depth style input normalizes and replicates") {
  SECTION("midpoint maps to one half") {
    Tensor d({2, 2});
    d[0] = 2.0;
    d[1] = 6.0;
    d[2] = 4.0;
    d[3] = 5.0;
    Tensor out = depth_style_input(d);
    REQUIRE(out.at(1, 0, 0) == Catch::Approx(0.5));
    REQUIRE(out.at(1, 0, 1) == Catch::Approx(0.5));
    REQUIRE(out.at(1, 0, 2) == Catch::Approx(0.5));
    REQUIRE(out.at(0, 0, 0) == Catch::Approx(0.0));
    REQUIRE(out.at(0, 1, 0) == Catch::Approx(1.0));
  }
  SECTION("constant depth degenerates to one half everywhere") {
    Tensor d = Tensor::full({3, 3}, 4.2);
    Tensor out = depth_style_input(d);
    for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 0.5);
  }
  SECTION("channels are identical for random input") {
    Rng rng(5);
    Tensor d({5, 7});
    for (auto& v : d.data) v = rng.uniform(1.0, 9.0);
    Tensor out = depth_style_input(d);
    for (int64_t i = 0; i < d.numel(); ++i) {
      REQUIRE(out[i * 3] == out[i * 3 + 1]);
      REQUIRE(out[i * 3] == out[i * 3 + 2]);
    }
  }
}
