#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vxs/core/autodiff.hpp"
#include "vxs/core/error.hpp"
#include "vxs/core/rng.hpp"
#include "vxs/core/tensor.hpp"

namespace vxs {

/// Voxel domain shared by the density, appearance and deformation grids.
struct GridSpec {
  std::array<int, 3> resolution{2, 2, 2};
  std::array<double, 3> bounds_min{-1.0, -1.0, -1.0};
  std::array<double, 3> bounds_max{1.0, 1.0, 1.0};
  int channels = 1;

  void validate() const {
    for (int d = 0; d < 3; ++d) {
      VXS_CHECK(resolution[d] >= 2, InvalidInput, "grid resolution must be >= 2 per axis");
      VXS_CHECK(bounds_min[d] < bounds_max[d], InvalidInput,
                "grid bounds_min must be < bounds_max componentwise");
    }
    VXS_CHECK(channels >= 1, InvalidInput, "grid channels must be >= 1");
  }

  int64_t voxel_count() const {
    return int64_t(resolution[0]) * resolution[1] * resolution[2];
  }
  int64_t value_count() const { return voxel_count() * channels; }

  /// World-space size of one voxel cell.
  std::array<double, 3> cell_size() const {
    return {(bounds_max[0] - bounds_min[0]) / resolution[0],
            (bounds_max[1] - bounds_min[1]) / resolution[1],
            (bounds_max[2] - bounds_min[2]) / resolution[2]};
  }

  /// World position of the center of voxel (i,j,k).
  std::array<double, 3> voxel_center(int i, int j, int k) const {
    auto c = cell_size();
    return {bounds_min[0] + (i + 0.5) * c[0], bounds_min[1] + (j + 0.5) * c[1],
            bounds_min[2] + (k + 0.5) * c[2]};
  }

  bool operator==(const GridSpec& o) const {
    return resolution == o.resolution && bounds_min == o.bounds_min &&
           bounds_max == o.bounds_max && channels == o.channels;
  }
};

enum class GridStorage { dense, vm };

/// Voxel grid with float32 state (the checkpoint payload is the in-memory
/// representation) and either dense or vector-matrix factorized storage.
///
/// Dense layout: value(x,y,z,c) at ((x*Ny + y)*Nz + z)*C + c.
/// VM layout, pairing k in {0,1,2} (vector along axis k, matrix over the
/// remaining two axes in ascending order):
///   vec[k]: [C][R][N_k],  mat[k]: [C][R][N_a][N_b]
///   value(x,y,z,c) = sum_k sum_r vec[k](c,r,u_k) * mat[k](c,r,u_a,u_b)
struct VoxelGrid {
  GridSpec spec;
  GridStorage storage = GridStorage::dense;
  std::vector<float> dense;
  int rank = 0;
  std::array<std::vector<float>, 3> vm_vec;
  std::array<std::vector<float>, 3> vm_mat;

  static VoxelGrid make_dense(const GridSpec& spec, float fill = 0.0f) {
    spec.validate();
    VoxelGrid g;
    g.spec = spec;
    g.storage = GridStorage::dense;
    g.dense.assign(static_cast<size_t>(spec.value_count()), fill);
    return g;
  }

  static VoxelGrid make_vm(const GridSpec& spec, int rank) {
    spec.validate();
    VXS_CHECK(rank >= 1, InvalidInput, "vm rank must be >= 1");
    VoxelGrid g;
    g.spec = spec;
    g.storage = GridStorage::vm;
    g.rank = rank;
    for (int k = 0; k < 3; ++k) {
      auto [a, b] = other_axes(k);
      g.vm_vec[k].assign(size_t(spec.channels) * rank * spec.resolution[k], 0.0f);
      g.vm_mat[k].assign(size_t(spec.channels) * rank * spec.resolution[a] * spec.resolution[b],
                         0.0f);
    }
    return g;
  }

  static std::pair<int, int> other_axes(int k) {
    switch (k) {
      case 0: return {1, 2};
      case 1: return {0, 2};
      default: return {0, 1};
    }
  }

  void fill(float v) {
    if (storage == GridStorage::dense) {
      std::fill(dense.begin(), dense.end(), v);
    } else {
      // Zero is the only fill that factorizes exactly.
      VXS_CHECK(v == 0.0f, InvalidInput, "vm grids can only be filled with zero");
      for (int k = 0; k < 3; ++k) {
        std::fill(vm_vec[k].begin(), vm_vec[k].end(), 0.0f);
        std::fill(vm_mat[k].begin(), vm_mat[k].end(), 0.0f);
      }
    }
  }

  void randomize(Rng& rng, double stddev) {
    if (storage == GridStorage::dense) {
      for (auto& v : dense) v = static_cast<float>(rng.normal() * stddev);
    } else {
      for (int k = 0; k < 3; ++k) {
        for (auto& v : vm_vec[k]) v = static_cast<float>(rng.normal() * stddev);
        for (auto& v : vm_mat[k]) v = static_cast<float>(rng.normal() * stddev);
      }
    }
  }

  /// Trainable parameter arrays, in declaration order (dense: one array;
  /// vm: vec0..2 then mat0..2). Checkpoint payloads follow this order.
  std::vector<std::vector<float>*> param_arrays() {
    if (storage == GridStorage::dense) return {&dense};
    return {&vm_vec[0], &vm_vec[1], &vm_vec[2], &vm_mat[0], &vm_mat[1], &vm_mat[2]};
  }
  std::vector<const std::vector<float>*> param_arrays() const {
    if (storage == GridStorage::dense) return {&dense};
    return {&vm_vec[0], &vm_vec[1], &vm_vec[2], &vm_mat[0], &vm_mat[1], &vm_mat[2]};
  }

  size_t dense_index(int x, int y, int z, int c) const {
    return ((size_t(x) * spec.resolution[1] + y) * spec.resolution[2] + z) * spec.channels + c;
  }

  float& at(int x, int y, int z, int c) { return dense[dense_index(x, y, z, c)]; }
  float at(int x, int y, int z, int c) const { return dense[dense_index(x, y, z, c)]; }
};

/// Evaluate the VM sum for one voxel/channel.
inline double vm_value(const VoxelGrid& g, int x, int y, int z, int c) {
  const auto& res = g.spec.resolution;
  int coord[3] = {x, y, z};
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    auto [a, b] = VoxelGrid::other_axes(k);
    const size_t vstride = size_t(res[k]);
    const size_t mstride = size_t(res[a]) * res[b];
    const float* vp = g.vm_vec[k].data() + (size_t(c) * g.rank) * vstride;
    const float* mp = g.vm_mat[k].data() + (size_t(c) * g.rank) * mstride;
    for (int r = 0; r < g.rank; ++r) {
      acc += double(vp[r * vstride + coord[k]]) *
             double(mp[r * mstride + size_t(coord[a]) * res[b] + coord[b]]);
    }
  }
  return acc;
}

/// Expand a factorized grid to its dense equivalent.
inline Tensor factorized_reconstruct(const VoxelGrid& g) {
  VXS_CHECK(g.storage == GridStorage::vm, InvalidInput,
            "factorized_reconstruct: grid is in dense mode");
  const auto& res = g.spec.resolution;
  Tensor out({res[0], res[1], res[2], g.spec.channels});
  int64_t idx = 0;
  for (int x = 0; x < res[0]; ++x)
    for (int y = 0; y < res[1]; ++y)
      for (int z = 0; z < res[2]; ++z)
        for (int c = 0; c < g.spec.channels; ++c) out[idx++] = vm_value(g, x, y, z, c);
  return out;
}

/// Densified copy (dense grids are returned as-is).
inline VoxelGrid densify(const VoxelGrid& g) {
  if (g.storage == GridStorage::dense) return g;
  VoxelGrid d = VoxelGrid::make_dense(g.spec);
  Tensor t = factorized_reconstruct(g);
  for (int64_t i = 0; i < t.numel(); ++i) d.dense[size_t(i)] = static_cast<float>(t[i]);
  return d;
}

// ---------------------------------------------------------------------------
// Trilinear sampling

namespace detail {

struct AxisSample {
  int i0 = 0;      // lower voxel index, in [0, N-2]
  double f = 0.0;  // fraction in [0, 1]
  bool clamped = false;
  double dudp = 0.0;  // d(grid coord)/d(world coord), zero when clamped
};

inline AxisSample axis_sample(double p, double bmin, double bmax, int n) {
  AxisSample s;
  double u = (p - bmin) / (bmax - bmin) * n - 0.5;
  double scale = n / (bmax - bmin);
  if (u <= 0.0) {
    s.i0 = 0;
    s.f = 0.0;
    s.clamped = true;
  } else if (u >= n - 1) {
    s.i0 = n - 2;
    s.f = 1.0;
    s.clamped = true;
  } else {
    s.i0 = static_cast<int>(u);
    if (s.i0 > n - 2) s.i0 = n - 2;
    s.f = u - s.i0;
    s.dudp = scale;
  }
  return s;
}

}  // namespace detail

/// One grid lifted into an autodiff graph: leaf Vars in param_arrays() order.
struct GridVars {
  const VoxelGrid* grid = nullptr;
  std::vector<ad::Var> params;
};

inline GridVars lift(const VoxelGrid& g, bool requires_grad) {
  GridVars gv;
  gv.grid = &g;
  for (const auto* arr : g.param_arrays()) {
    Tensor t({static_cast<int>(arr->size())});
    for (size_t i = 0; i < arr->size(); ++i) t[int64_t(i)] = double((*arr)[i]);
    gv.params.push_back(requires_grad ? ad::leaf(std::move(t)) : ad::constant(std::move(t)));
  }
  return gv;
}

namespace detail {

inline void check_points(const Tensor& pts) {
  VXS_CHECK(pts.ndim() == 2 && pts.dim(1) == 3, InvalidInput,
            "points tensor must have shape [N,3]");
  VXS_CHECK(pts.all_finite(), InvalidInput, "non-finite point coordinates");
}

// Dense forward/backward. grad buffers may be null when not required.
// Parallel over points; grid gradients scatter into per-thread buffers that
// are reduced in thread order, so results are bitwise deterministic for a
// fixed thread count.
inline void dense_sample(const VoxelGrid& g, const Tensor& grid_vals, const Tensor& pts,
                         Tensor* out, const Tensor* gout, Tensor* ggrid, Tensor* gpts) {
  const auto& res = g.spec.resolution;
  const int C = g.spec.channels;
  const int64_t N = pts.dim(0);
  const int ny = res[1], nz = res[2];

  int n_threads = 1;
#ifdef _OPENMP
  n_threads = omp_get_max_threads();
#endif
  std::vector<std::vector<double>> grid_bufs;
  if (ggrid)
    grid_bufs.assign(static_cast<size_t>(n_threads),
                     std::vector<double>(grid_vals.data.size(), 0.0));

#pragma omp parallel num_threads(n_threads)
  {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
    double* gbuf = ggrid ? grid_bufs[static_cast<size_t>(tid)].data() : nullptr;
#pragma omp for schedule(static)
    for (int64_t p = 0; p < N; ++p) {
      AxisSample ax =
          axis_sample(pts[p * 3 + 0], g.spec.bounds_min[0], g.spec.bounds_max[0], res[0]);
      AxisSample ay =
          axis_sample(pts[p * 3 + 1], g.spec.bounds_min[1], g.spec.bounds_max[1], res[1]);
      AxisSample az =
          axis_sample(pts[p * 3 + 2], g.spec.bounds_min[2], g.spec.bounds_max[2], res[2]);
      double wx[2] = {1.0 - ax.f, ax.f};
      double wy[2] = {1.0 - ay.f, ay.f};
      double wz[2] = {1.0 - az.f, az.f};
      for (int c = 0; c < C; ++c) {
        double acc = 0.0, dx = 0.0, dy = 0.0, dz = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int d = 0; d < 2; ++d) {
              size_t idx = ((size_t(ax.i0 + a) * ny + (ay.i0 + b)) * nz + (az.i0 + d)) * C + c;
              double v = grid_vals[int64_t(idx)];
              double w = wx[a] * wy[b] * wz[d];
              if (out) acc += w * v;
              if (gpts) {
                dx += (a ? 1.0 : -1.0) * wy[b] * wz[d] * v;
                dy += (b ? 1.0 : -1.0) * wx[a] * wz[d] * v;
                dz += (d ? 1.0 : -1.0) * wx[a] * wy[b] * v;
              }
              if (gbuf) gbuf[idx] += w * (*gout)[p * C + c];
            }
        if (out) (*out)[p * C + c] = acc;
        if (gpts) {
          double go = (*gout)[p * C + c];
          (*gpts)[p * 3 + 0] += go * dx * ax.dudp;
          (*gpts)[p * 3 + 1] += go * dy * ay.dudp;
          (*gpts)[p * 3 + 2] += go * dz * az.dudp;
        }
      }
    }
  }
  if (ggrid) {
    for (int t = 0; t < n_threads; ++t) {
      const auto& buf = grid_bufs[static_cast<size_t>(t)];
      for (size_t i = 0; i < buf.size(); ++i) (*ggrid)[int64_t(i)] += buf[i];
    }
  }
}

// VM forward/backward. Parameter tensors ordered vec0..2, mat0..2.
inline void vm_sample(const VoxelGrid& g, const std::array<const Tensor*, 6>& params,
                      const Tensor& pts, Tensor* out, const Tensor* gout,
                      const std::array<Tensor*, 6>& gparams, Tensor* gpts) {
  const auto& res = g.spec.resolution;
  const int C = g.spec.channels;
  const int R = g.rank;
  const int64_t N = pts.dim(0);
  for (int64_t p = 0; p < N; ++p) {
    AxisSample s[3];
    for (int d = 0; d < 3; ++d)
      s[d] = axis_sample(pts[p * 3 + d], g.spec.bounds_min[d], g.spec.bounds_max[d], res[d]);
    for (int k = 0; k < 3; ++k) {
      auto [a, b] = VoxelGrid::other_axes(k);
      const Tensor& vec = *params[k];
      const Tensor& mat = *params[3 + k];
      const size_t vstr = size_t(res[k]);
      const size_t mstr = size_t(res[a]) * res[b];
      double wk[2] = {1.0 - s[k].f, s[k].f};
      double wa[2] = {1.0 - s[a].f, s[a].f};
      double wb[2] = {1.0 - s[b].f, s[b].f};
      for (int c = 0; c < C; ++c) {
        double go = gout ? (*gout)[p * C + c] : 0.0;
        for (int r = 0; r < R; ++r) {
          const size_t vbase = (size_t(c) * R + r) * vstr;
          const size_t mbase = (size_t(c) * R + r) * mstr;
          // Linear interp of the vector along axis k.
          double vl[2] = {vec[int64_t(vbase + s[k].i0)], vec[int64_t(vbase + s[k].i0 + 1)]};
          double vval = wk[0] * vl[0] + wk[1] * vl[1];
          // Bilinear interp of the matrix over axes (a, b).
          double mval = 0.0, dmda = 0.0, dmdb = 0.0;
          double mcorner[2][2];
          for (int ia = 0; ia < 2; ++ia)
            for (int ib = 0; ib < 2; ++ib) {
              double m = mat[int64_t(mbase + size_t(s[a].i0 + ia) * res[b] + (s[b].i0 + ib))];
              mcorner[ia][ib] = m;
              mval += wa[ia] * wb[ib] * m;
              dmda += (ia ? 1.0 : -1.0) * wb[ib] * m;
              dmdb += (ib ? 1.0 : -1.0) * wa[ia] * m;
            }
          if (out) (*out)[p * C + c] += vval * mval;
          if (gparams[k]) {
            (*gparams[k])[int64_t(vbase + s[k].i0)] += go * wk[0] * mval;
            (*gparams[k])[int64_t(vbase + s[k].i0 + 1)] += go * wk[1] * mval;
          }
          if (gparams[3 + k]) {
            for (int ia = 0; ia < 2; ++ia)
              for (int ib = 0; ib < 2; ++ib)
                (*gparams[3 + k])[int64_t(mbase + size_t(s[a].i0 + ia) * res[b] +
                                          (s[b].i0 + ib))] += go * vval * wa[ia] * wb[ib];
          }
          if (gpts) {
            double dvdk = vl[1] - vl[0];
            (*gpts)[p * 3 + k] += go * dvdk * mval * s[k].dudp;
            (*gpts)[p * 3 + a] += go * vval * dmda * s[a].dudp;
            (*gpts)[p * 3 + b] += go * vval * dmdb * s[b].dudp;
          }
          (void)mcorner;
        }
      }
    }
  }
}

}  // namespace detail

enum class Activation { none, softplus, sigmoid };

/// Differentiable trilinear sampling of a lifted grid at world-space points
/// [N,3] -> [N,C] (or `out_shape` with the same element count). Out-of-bounds
/// points clamp to the boundary. Gradients flow to both the grid parameters
/// and the point coordinates. An optional activation is fused into the node.
inline ad::Var trilinear_sample(const GridVars& gv, const ad::Var& points,
                                Activation act = Activation::none,
                                std::vector<int> out_shape = {}) {
  const VoxelGrid& g = *gv.grid;
  detail::check_points(points.val());
  const int64_t N = points.val().dim(0);
  if (out_shape.empty()) out_shape = {static_cast<int>(N), g.spec.channels};
  Tensor out(std::move(out_shape));
  VXS_CHECK(out.numel() == N * g.spec.channels, InvalidInput,
            "trilinear_sample: out_shape element count mismatch");
  Tensor raw_view({static_cast<int>(N), g.spec.channels});

  auto run_forward = [&](Tensor& dst) {
    if (g.storage == GridStorage::dense) {
      detail::dense_sample(g, gv.params[0].val(), points.val(), &dst, nullptr, nullptr, nullptr);
    } else {
      std::array<const Tensor*, 6> pv{};
      for (int i = 0; i < 6; ++i) pv[size_t(i)] = &gv.params[size_t(i)].val();
      std::fill(dst.data.begin(), dst.data.end(), 0.0);
      detail::vm_sample(g, pv, points.val(), &dst, nullptr, {}, nullptr);
    }
  };
  run_forward(raw_view);

  // Fused activation: apply in place and keep the derivative for backward.
  std::shared_ptr<Tensor> dact;
  switch (act) {
    case Activation::none:
      out.data = std::move(raw_view.data);
      break;
    case Activation::softplus: {
      dact = std::make_shared<Tensor>(Tensor({static_cast<int>(N), g.spec.channels}));
      for (int64_t i = 0; i < raw_view.numel(); ++i) {
        (*dact)[i] = ad::sigmoid_fn(raw_view[i]);
        out[i] = ad::softplus_fn(raw_view[i]);
      }
      break;
    }
    case Activation::sigmoid: {
      dact = std::make_shared<Tensor>(Tensor({static_cast<int>(N), g.spec.channels}));
      for (int64_t i = 0; i < raw_view.numel(); ++i) {
        double y = ad::sigmoid_fn(raw_view[i]);
        out[i] = y;
        (*dact)[i] = y * (1.0 - y);
      }
      break;
    }
  }

  std::vector<ad::Var> parents = gv.params;
  parents.push_back(points);
  const VoxelGrid* gp = &g;
  auto params = gv.params;
  return ad::make_op(std::move(out), parents, [params, points, gp, dact](ad::Node& n) {
    const Tensor* geff = &n.grad;
    Tensor chained;
    if (dact) {
      chained = n.grad;
      for (int64_t i = 0; i < chained.numel(); ++i) chained[i] *= (*dact)[i];
      geff = &chained;
    }
    Tensor* gpts = points.requires_grad() ? &points.grad() : nullptr;
    if (gp->storage == GridStorage::dense) {
      Tensor* ggrid = params[0].requires_grad() ? &params[0].grad() : nullptr;
      detail::dense_sample(*gp, params[0].val(), points.val(), nullptr, geff, ggrid, gpts);
    } else {
      std::array<const Tensor*, 6> vals{};
      std::array<Tensor*, 6> grads{};
      for (int i = 0; i < 6; ++i) {
        vals[size_t(i)] = &params[size_t(i)].val();
        grads[size_t(i)] =
            params[size_t(i)].requires_grad() ? &params[size_t(i)].grad() : nullptr;
      }
      detail::vm_sample(*gp, vals, points.val(), nullptr, geff, grads, gpts);
    }
  });
}

/// Non-differentiable convenience overload.
inline Tensor trilinear_sample(const VoxelGrid& g, const Tensor& points) {
  GridVars gv = lift(g, false);
  return trilinear_sample(gv, ad::constant(points)).val();
}

// ---------------------------------------------------------------------------
// Radiance field

/// Density, appearance and deformation grids over a shared voxel domain.
/// Values are stored pre-activation: density decodes through softplus,
/// color through sigmoid, deformation is used raw (world-unit offsets).
struct RadianceField {
  VoxelGrid density;      // 1 channel
  VoxelGrid color;        // 3 channels
  VoxelGrid deformation;  // 3 channels, always dense
  std::array<double, 3> background{1.0, 1.0, 1.0};

  struct Options {
    std::array<int, 3> resolution{64, 64, 64};
    std::array<int, 3> deform_resolution{0, 0, 0};  // zero -> same as resolution
    std::array<double, 3> bounds_min{-1.0, -1.0, -1.0};
    std::array<double, 3> bounds_max{1.0, 1.0, 1.0};
    GridStorage storage = GridStorage::dense;
    int rank = 8;
    float density_init = -2.0f;  // pre-softplus; thin fog so gradients reach
  };

  static RadianceField create(const Options& o) {
    RadianceField f;
    GridSpec ds{o.resolution, o.bounds_min, o.bounds_max, 1};
    GridSpec cs{o.resolution, o.bounds_min, o.bounds_max, 3};
    auto dres = o.deform_resolution[0] > 0 ? o.deform_resolution : o.resolution;
    GridSpec fs{dres, o.bounds_min, o.bounds_max, 3};
    if (o.storage == GridStorage::dense) {
      f.density = VoxelGrid::make_dense(ds, o.density_init);
      f.color = VoxelGrid::make_dense(cs, 0.0f);
    } else {
      f.density = VoxelGrid::make_vm(ds, o.rank);
      f.color = VoxelGrid::make_vm(cs, o.rank);
    }
    f.deformation = VoxelGrid::make_dense(fs, 0.0f);
    return f;
  }

  void init_deformation_zero() { deformation.fill(0.0f); }

  void validate() const {
    VXS_CHECK(density.spec.channels == 1, InvalidInput, "density grid must have 1 channel");
    VXS_CHECK(color.spec.channels == 3, InvalidInput, "color grid must have 3 channels");
    VXS_CHECK(deformation.spec.channels == 3, InvalidInput,
              "deformation grid must have 3 channels");
    VXS_CHECK(density.spec.bounds_min == color.spec.bounds_min &&
                  density.spec.bounds_max == color.spec.bounds_max &&
                  density.spec.bounds_min == deformation.spec.bounds_min &&
                  density.spec.bounds_max == deformation.spec.bounds_max,
              InvalidInput, "field grids must share bounds");
    for (double b : background)
      VXS_CHECK(b >= 0.0 && b <= 1.0, InvalidInput, "background color must be in [0,1]");
  }
};

/// A radiance field lifted into one autodiff graph. Density, color and
/// deformation can be marked trainable independently; frozen grids enter
/// the graph as constants.
struct FieldVars {
  GridVars density, color, deformation;
};

inline FieldVars lift(const RadianceField& f, bool grad_density, bool grad_color,
                      bool grad_deformation) {
  return FieldVars{lift(f.density, grad_density), lift(f.color, grad_color),
                   lift(f.deformation, grad_deformation)};
}

inline ad::Var sample_density(const FieldVars& fv, const ad::Var& points) {
  return trilinear_sample(fv.density, points, Activation::softplus);
}

inline ad::Var sample_color(const FieldVars& fv, const ad::Var& points) {
  return trilinear_sample(fv.color, points, Activation::sigmoid);
}

inline ad::Var sample_deformation(const FieldVars& fv, const ad::Var& points) {
  return trilinear_sample(fv.deformation, points);
}

inline Tensor sample_density(const RadianceField& f, const Tensor& points) {
  FieldVars fv = lift(f, false, false, false);
  return sample_density(fv, ad::constant(points)).val();
}

inline Tensor sample_color(const RadianceField& f, const Tensor& points) {
  FieldVars fv = lift(f, false, false, false);
  return sample_color(fv, ad::constant(points)).val();
}

inline Tensor sample_deformation(const RadianceField& f, const Tensor& points) {
  FieldVars fv = lift(f, false, false, false);
  return sample_deformation(fv, ad::constant(points)).val();
}

}  // namespace vxs
