#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "vxs/field/grid.hpp"

using namespace vxs;

namespace {

Tensor points_tensor(std::initializer_list<std::array<double, 3>> pts) {
  Tensor t({static_cast<int>(pts.size()), 3});
  int64_t i = 0;
  for (const auto& p : pts) {
    t[i * 3] = p[0];
    t[i * 3 + 1] = p[1];
    t[i * 3 + 2] = p[2];
    ++i;
  }
  return t;
}

Tensor random_points(Rng& rng, int n, double lo, double hi) {
  Tensor t({n, 3});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

VoxelGrid random_grid(Rng& rng, std::array<int, 3> res, int channels) {
  VoxelGrid g = VoxelGrid::make_dense(GridSpec{res, {-1, -1, -1}, {1, 1, 1}, channels});
  for (auto& v : g.dense) v = static_cast<float>(rng.normal());
  return g;
}

}  // namespace

TEST_CASE("trilinear sampling of a constant grid returns the constant") {
  VoxelGrid g = VoxelGrid::make_dense(GridSpec{{4, 4, 4}, {-1, -1, -1}, {1, 1, 1}, 2}, 3.25f);
  Rng rng(7);
  Tensor pts = random_points(rng, 32, -0.95, 0.95);
  Tensor out = trilinear_sample(g, pts);
  for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == Catch::Approx(3.25).margin(1e-12));
}

TEST_CASE("trilinear sampling at a voxel center returns that voxel") {
  Rng rng(11);
  VoxelGrid g = random_grid(rng, {5, 4, 6}, 1);
  auto c = g.spec.voxel_center(2, 1, 4);
  Tensor out = trilinear_sample(g, points_tensor({{c[0], c[1], c[2]}}));
  REQUIRE(out[0] == Catch::Approx(double(g.at(2, 1, 4, 0))).margin(1e-12));
}

TEST_CASE("trilinear sampling matches the 8-corner oracle") {
  Rng rng(13);
  VoxelGrid g = random_grid(rng, {4, 4, 4}, 3);
  Tensor pts = random_points(rng, 64, -0.99, 0.99);
  Tensor out = trilinear_sample(g, pts);
  for (int i = 0; i < 64; ++i)
    for (int c = 0; c < 3; ++c) {
      double want = oracle::trilinear(g, pts[int64_t(i) * 3], pts[int64_t(i) * 3 + 1],
                                      pts[int64_t(i) * 3 + 2], c);
      REQUIRE(std::abs(out[int64_t(i) * 3 + c] - want) < 1e-6);
    }
}

TEST_CASE("out-of-bounds points clamp continuously to the boundary") {
  Rng rng(17);
  VoxelGrid g = random_grid(rng, {6, 6, 6}, 1);
  // exterior point and its projection onto the bounds
  Tensor pts = points_tensor({{1.7, 0.2, -0.4}, {1.0, 0.2, -0.4}});
  Tensor out = trilinear_sample(g, pts);
  REQUIRE(out[0] == Catch::Approx(out[1]).margin(1e-12));
}

TEST_CASE("non-finite points are rejected") {
  VoxelGrid g = VoxelGrid::make_dense(GridSpec{{2, 2, 2}, {-1, -1, -1}, {1, 1, 1}, 1});
  Tensor pts({1, 3});
  pts[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(trilinear_sample(g, pts), InvalidInput);
}

TEST_CASE("density sampling applies softplus") {
  GridSpec spec{{4, 4, 4}, {-1, -1, -1}, {1, 1, 1}, 1};
  RadianceField::Options o;
  o.resolution = {4, 4, 4};
  RadianceField f = RadianceField::create(o);

  SECTION("large negative raw values give near-zero sigma") {
    f.density.fill(-20.0f);
    Tensor out = sample_density(f, points_tensor({{0.1, 0.2, 0.3}}));
    REQUIRE(out[0] >= 0.0);
    REQUIRE(out[0] < 1e-8);
  }
  SECTION("zero raw value gives ln 2") {
    f.density.fill(0.0f);
    Tensor out = sample_density(f, points_tensor({{0.1, -0.2, 0.3}}));
    REQUIRE(out[0] == Catch::Approx(std::log(2.0)).margin(1e-12));
  }
  SECTION("random grid matches softplus of the interpolation oracle") {
    Rng rng(23);
    for (auto& v : f.density.dense) v = static_cast<float>(rng.normal());
    Tensor pts = random_points(rng, 32, -0.99, 0.99);
    Tensor out = sample_density(f, pts);
    for (int i = 0; i < 32; ++i) {
      double raw = oracle::trilinear(f.density, pts[int64_t(i) * 3], pts[int64_t(i) * 3 + 1],
                                     pts[int64_t(i) * 3 + 2], 0);
      REQUIRE(std::abs(out[i] - std::log1p(std::exp(raw))) < 1e-6);
    }
  }
}

TEST_CASE("color sampling applies sigmoid") {
  RadianceField::Options o;
  o.resolution = {4, 4, 4};
  RadianceField f = RadianceField::create(o);

  SECTION("zero raw gives mid gray") {
    Tensor out = sample_color(f, points_tensor({{0.0, 0.0, 0.0}}));
    for (int c = 0; c < 3; ++c) REQUIRE(out[c] == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("saturated raw values approach one") {
    f.color.fill(20.0f);
    Tensor out = sample_color(f, points_tensor({{0.3, 0.3, 0.3}}));
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(out[c] - 1.0) < 1e-8);
  }
  SECTION("random grid matches sigmoid of oracle") {
    Rng rng(29);
    for (auto& v : f.color.dense) v = static_cast<float>(rng.normal());
    Tensor pts = random_points(rng, 16, -0.99, 0.99);
    Tensor out = sample_color(f, pts);
    for (int i = 0; i < 16; ++i)
      for (int c = 0; c < 3; ++c) {
        double raw = oracle::trilinear(f.color, pts[int64_t(i) * 3], pts[int64_t(i) * 3 + 1],
                                       pts[int64_t(i) * 3 + 2], c);
        REQUIRE(std::abs(out[int64_t(i) * 3 + c] - 1.0 / (1.0 + std::exp(-raw))) < 1e-6);
      }
  }
}

TEST_CASE("deformation sampling is raw and exactly zero after init") {
  RadianceField::Options o;
  o.resolution = {4, 4, 4};
  RadianceField f = RadianceField::create(o);
  f.init_deformation_zero();

  SECTION("fresh field gives exact zeros") {
    Rng rng(31);
    Tensor pts = random_points(rng, 64, -1.4, 1.4);
    Tensor out = sample_deformation(f, pts);
    for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 0.0);
  }
  SECTION("zero deformation leaves query points bit-exact") {
    Rng rng(37);
    Tensor pts = random_points(rng, 64, -0.99, 0.99);
    FieldVars fv = lift(f, false, false, false);
    ad::Var x = ad::constant(pts);
    ad::Var q = ad::add(x, sample_deformation(fv, x));
    for (int64_t i = 0; i < pts.numel(); ++i) REQUIRE(q.val()[i] == pts[i]);
  }
  SECTION("constant deformation grid reproduces the constant") {
    for (size_t i = 0; i < f.deformation.dense.size(); i += 3) {
      f.deformation.dense[i] = 0.25f;
      f.deformation.dense[i + 1] = -0.5f;
      f.deformation.dense[i + 2] = 1.5f;
    }
    Tensor out = sample_deformation(f, points_tensor({{0.3, -0.2, 0.7}}));
    REQUIRE(out[0] == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(out[1] == Catch::Approx(-0.5).margin(1e-12));
    REQUIRE(out[2] == Catch::Approx(1.5).margin(1e-12));
  }
  SECTION("random deformation matches oracle") {
    Rng rng(41);
    for (auto& v : f.deformation.dense) v = static_cast<float>(rng.normal() * 0.1);
    Tensor pts = random_points(rng, 16, -0.99, 0.99);
    Tensor out = sample_deformation(f, pts);
    for (int i = 0; i < 16; ++i)
      for (int c = 0; c < 3; ++c) {
        double want = oracle::trilinear(f.deformation, pts[int64_t(i) * 3],
                                        pts[int64_t(i) * 3 + 1], pts[int64_t(i) * 3 + 2], c);
        REQUIRE(std::abs(out[int64_t(i) * 3 + c] - want) < 1e-6);
      }
  }
}

TEST_CASE("vector-matrix factorization") {
  GridSpec spec{{2, 2, 2}, {-1, -1, -1}, {1, 1, 1}, 1};

  SECTION("rank-1 all-ones factors reconstruct to 3 (one per axis pairing)") {
    VoxelGrid g = VoxelGrid::make_vm(spec, 1);
    for (int k = 0; k < 3; ++k) {
      std::fill(g.vm_vec[k].begin(), g.vm_vec[k].end(), 1.0f);
      std::fill(g.vm_mat[k].begin(), g.vm_mat[k].end(), 1.0f);
    }
    Tensor dense = factorized_reconstruct(g);
    for (int64_t i = 0; i < dense.numel(); ++i) REQUIRE(dense[i] == Catch::Approx(3.0));
  }

  SECTION("zero factors reconstruct to zero") {
    VoxelGrid g = VoxelGrid::make_vm(spec, 2);
    Tensor dense = factorized_reconstruct(g);
    for (int64_t i = 0; i < dense.numel(); ++i) REQUIRE(dense[i] == 0.0);
  }

  SECTION("reconstruct on a dense grid is a mode error") {
    VoxelGrid g = VoxelGrid::make_dense(spec);
    REQUIRE_THROWS_AS(factorized_reconstruct(g), InvalidInput);
  }

  SECTION("sampling a factorized grid equals sampling its densification") {
    Rng rng(43);
    VoxelGrid g = VoxelGrid::make_vm(GridSpec{{5, 6, 4}, {-1, -1, -1}, {1, 1, 1}, 2}, 3);
    g.randomize(rng, 0.5);
    VoxelGrid d = densify(g);
    Tensor pts = random_points(rng, 48, -1.1, 1.1);
    Tensor a = trilinear_sample(g, pts);
    Tensor b = trilinear_sample(d, pts);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(std::abs(a[i] - b[i]) < 1e-6);
  }
}

TEST_CASE("sampler gradients match finite differences on random 8x8x8 grids") {
  Rng rng(47);
  RadianceField::Options o;
  o.resolution = {8, 8, 8};
  RadianceField f = RadianceField::create(o);
  for (auto& v : f.density.dense) v = static_cast<float>(rng.normal());
  for (auto& v : f.color.dense) v = static_cast<float>(rng.normal());
  for (auto& v : f.deformation.dense) v = static_cast<float>(rng.normal() * 0.05);

  Tensor pts = random_points(rng, 24, -0.95, 0.95);
  Tensor wts({24, 1});
  Tensor wts3({24, 3});
  for (auto& v : wts.data) v = rng.normal();
  for (auto& v : wts3.data) v = rng.normal();

  auto density_loss = [&]() {
    FieldVars fv = lift(f, true, false, false);
    ad::Var out = sample_density(fv, ad::constant(pts));
    return ad::sum(ad::mul(out, ad::constant(wts)));
  };
  auto color_loss = [&]() {
    FieldVars fv = lift(f, false, true, false);
    ad::Var out = sample_color(fv, ad::constant(pts));
    return ad::sum(ad::mul(out, ad::constant(wts3)));
  };

  SECTION("gradients w.r.t. density grid values") {
    FieldVars fv = lift(f, true, false, false);
    ad::Var loss = ad::sum(ad::mul(sample_density(fv, ad::constant(pts)), ad::constant(wts)));
    ad::backward(loss);
    const Tensor& g = fv.density.params[0].grad();
    int checked = 0;
    for (size_t i = 0; i < f.density.dense.size() && checked < 40; i += 11, ++checked) {
      double fd = oracle::fd_float([&]() { return density_loss().scalar(); },
                                   f.density.dense[i]);
      if (std::abs(fd) < 1e-10 && std::abs(g[int64_t(i)]) < 1e-10) continue;
      REQUIRE(oracle::rel_err(g[int64_t(i)], fd) < 1e-4);
    }
  }

  SECTION("gradients w.r.t. color grid values") {
    FieldVars fv = lift(f, false, true, false);
    ad::Var loss = ad::sum(ad::mul(sample_color(fv, ad::constant(pts)), ad::constant(wts3)));
    ad::backward(loss);
    const Tensor& g = fv.color.params[0].grad();
    int checked = 0;
    for (size_t i = 0; i < f.color.dense.size() && checked < 40; i += 31, ++checked) {
      double fd = oracle::fd_float([&]() { return color_loss().scalar(); }, f.color.dense[i]);
      if (std::abs(fd) < 1e-10 && std::abs(g[int64_t(i)]) < 1e-10) continue;
      REQUIRE(oracle::rel_err(g[int64_t(i)], fd) < 1e-4);
    }
  }

  SECTION("gradients w.r.t. point coordinates") {
    auto eval = [&]() {
      FieldVars fv = lift(f, false, false, false);
      ad::Var p = ad::constant(pts);
      ad::Var out = sample_density(fv, p);
      return ad::sum(ad::mul(out, ad::constant(wts))).scalar();
    };
    FieldVars fv = lift(f, false, false, false);
    ad::Var p = ad::leaf(pts);
    ad::Var loss = ad::sum(ad::mul(sample_density(fv, p), ad::constant(wts)));
    ad::backward(loss);
    const Tensor& g = p.grad();
    for (int64_t i = 0; i < pts.numel(); i += 7) {
      double fd = oracle::fd_double(eval, pts[i]);
      if (std::abs(fd) < 1e-10 && std::abs(g[i]) < 1e-10) continue;
      REQUIRE(oracle::rel_err(g[i], fd) < 1e-4);
    }
  }

  SECTION("gradients w.r.t. vm factors") {
    VoxelGrid vm = VoxelGrid::make_vm(GridSpec{{8, 8, 8}, {-1, -1, -1}, {1, 1, 1}, 1}, 2);
    vm.randomize(rng, 0.4);
    auto eval = [&]() {
      GridVars gv = lift(vm, false);
      return ad::sum(ad::mul(trilinear_sample(gv, ad::constant(pts)), ad::constant(wts)))
          .scalar();
    };
    GridVars gv = lift(vm, true);
    ad::Var loss =
        ad::sum(ad::mul(trilinear_sample(gv, ad::constant(pts)), ad::constant(wts)));
    ad::backward(loss);
    for (int pi = 0; pi < 6; ++pi) {
      auto arrays = vm.param_arrays();
      const Tensor& g = gv.params[size_t(pi)].grad();
      for (size_t i = 0; i < arrays[size_t(pi)]->size(); i += 17) {
        double fd = oracle::fd_float(eval, (*arrays[size_t(pi)])[i]);
        if (std::abs(fd) < 1e-10 && std::abs(g[int64_t(i)]) < 1e-10) continue;
        REQUIRE(oracle::rel_err(g[int64_t(i)], fd) < 1e-4);
      }
    }
  }
}
