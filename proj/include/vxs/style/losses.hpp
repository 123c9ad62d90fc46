#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "vxs/core/autodiff.hpp"
#include "vxs/core/error.hpp"
#include "vxs/core/tensor.hpp"
#include "vxs/features/extractor.hpp"

namespace vxs {

/// Cosine distance 1 - u.v / (|u||v|) in [0,2]; either input zero -> 1.
inline double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
  VXS_CHECK(u.size() == v.size(), InvalidInput, "cosine_distance: length mismatch");
  double uu = 0, vv = 0, uv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 1.0;
  return 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
}

/// Selected style index and distance per content position, plus the
/// aggregated loss. Positions excluded by a subset keep index -1.
struct MatchResult {
  std::vector<int> indices;
  std::vector<double> distances;
  double loss = 0.0;
};

inline void to_json(nlohmann::json& j, const MatchResult& m) {
  j = {{"indices", m.indices}, {"distances", m.distances}, {"loss", m.loss}};
}

namespace detail {

/// Row-normalize a [P,C] tensor in place (zero rows stay zero).
inline Tensor normalized_rows(const Tensor& t) {
  Tensor out = t;
  const int P = t.dim(0), C = t.dim(1);
  for (int i = 0; i < P; ++i) {
    double n2 = 0.0;
    for (int c = 0; c < C; ++c) n2 += out[int64_t(i) * C + c] * out[int64_t(i) * C + c];
    if (n2 == 0.0) continue;
    double inv = 1.0 / std::sqrt(n2);
    for (int c = 0; c < C; ++c) out[int64_t(i) * C + c] *= inv;
  }
  return out;
}

inline std::vector<int> all_rows(int p) {
  std::vector<int> v(static_cast<size_t>(p));
  for (int i = 0; i < p; ++i) v[static_cast<size_t>(i)] = i;
  return v;
}

/// Mean over selected rows of (1 - row_i . style_j(i)) with fixed indices;
/// gradient -style_j(i) / n flows into the selected normalized rows.
inline ad::Var fixed_pair_loss(const ad::Var& rows_normalized, const Tensor& style_normalized,
                               const std::vector<int>& subset, const std::vector<int>& match) {
  const Tensor& cr = rows_normalized.val();
  const int C = cr.dim(1);
  const int64_t n = static_cast<int64_t>(subset.size());
  VXS_CHECK(n > 0, InvalidInput, "fixed_pair_loss: empty subset");
  double acc = 0.0;
  for (size_t s = 0; s < subset.size(); ++s) {
    int i = subset[s], j = match[s];
    double dot = 0.0;
    for (int c = 0; c < C; ++c) dot += cr[int64_t(i) * C + c] * style_normalized[int64_t(j) * C + c];
    acc += 1.0 - dot;
  }
  acc /= static_cast<double>(n);
  Tensor style_copy = style_normalized;
  return ad::make_op(Tensor::scalar(acc), {rows_normalized},
                     [rows_normalized, style_copy, subset, match, C, n](ad::Node& node) {
                       auto& g = rows_normalized.grad();
                       double go = node.grad[0] / static_cast<double>(n);
                       for (size_t s = 0; s < subset.size(); ++s) {
                         int i = subset[s], j = match[s];
                         for (int c = 0; c < C; ++c)
                           g[int64_t(i) * C + c] -= go * style_copy[int64_t(j) * C + c];
                       }
                     });
}

}  // namespace detail

struct StyleLoss {
  ad::Var loss;
  MatchResult match;
};

/// Nearest-neighbor matching loss (mean over content positions of the
/// minimum cosine distance to any style position). Differentiable w.r.t.
/// the content features; matched indices are constants of the graph.
/// `subset` restricts the mean to the listed content rows.
inline StyleLoss nn_match_loss(const ad::Var& content_rows, const Tensor& style_rows,
                               const std::vector<int>* subset = nullptr) {
  const Tensor& cv = content_rows.val();
  VXS_CHECK(cv.ndim() == 2 && style_rows.ndim() == 2, InvalidInput,
            "nn_match_loss expects [P,C] rows");
  VXS_CHECK(cv.numel() > 0 && style_rows.numel() > 0, InvalidInput,
            "nn_match_loss: empty feature map");
  VXS_CHECK(cv.dim(1) == style_rows.dim(1), InvalidInput, "nn_match_loss: channel mismatch");
  const int P = cv.dim(0), Q = style_rows.dim(0), C = cv.dim(1);

  NormalizedRows cn = normalize_features(content_rows);
  Tensor sn = detail::normalized_rows(style_rows);

  std::vector<int> rows = subset ? *subset : detail::all_rows(P);
  for (int i : rows) VXS_CHECK(i >= 0 && i < P, InvalidInput, "nn_match_loss: subset out of range");

  MatchResult mr;
  mr.indices.assign(static_cast<size_t>(P), -1);
  mr.distances.assign(static_cast<size_t>(P), 0.0);
  std::vector<int> match(rows.size(), 0);
  const Tensor& cnv = cn.rows.val();
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < static_cast<int64_t>(rows.size()); ++s) {
    int i = rows[static_cast<size_t>(s)];
    double best = -std::numeric_limits<double>::infinity();
    int bj = 0;
    for (int j = 0; j < Q; ++j) {
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += cnv[int64_t(i) * C + c] * sn[int64_t(j) * C + c];
      if (dot > best) {
        best = dot;
        bj = j;
      }
    }
    match[static_cast<size_t>(s)] = bj;
    mr.indices[static_cast<size_t>(i)] = bj;
    mr.distances[static_cast<size_t>(i)] = 1.0 - best;
  }

  StyleLoss out;
  out.loss = detail::fixed_pair_loss(cn.rows, sn, rows, match);
  mr.loss = out.loss.scalar();
  out.match = std::move(mr);
  return out;
}

/// Joint nearest style index per content position: argmin of the cosine
/// distance between concatenations of the per-modality L2-normalized RGB
/// and depth features. Ties break to the smaller index.
inline std::vector<int> joint_nearest_index(const Tensor& rgb_c, const Tensor& depth_c,
                                            const Tensor& rgb_s, const Tensor& depth_s,
                                            const std::vector<int>* subset = nullptr) {
  VXS_CHECK(rgb_c.ndim() == 2 && depth_c.ndim() == 2 && rgb_s.ndim() == 2 && depth_s.ndim() == 2,
            InvalidInput, "joint_nearest_index expects [P,C] rows");
  VXS_CHECK(rgb_c.dim(0) == depth_c.dim(0) && rgb_s.dim(0) == depth_s.dim(0), InvalidInput,
            "joint_nearest_index: RGB and depth maps are spatially misaligned");
  VXS_CHECK(rgb_c.dim(1) == rgb_s.dim(1) && depth_c.dim(1) == depth_s.dim(1), InvalidInput,
            "joint_nearest_index: channel mismatch");
  const int P = rgb_c.dim(0), Q = rgb_s.dim(0);
  const int Cr = rgb_c.dim(1), Cd = depth_c.dim(1);

  Tensor rc = detail::normalized_rows(rgb_c), dc = detail::normalized_rows(depth_c);
  Tensor rs = detail::normalized_rows(rgb_s), ds = detail::normalized_rows(depth_s);
  auto row_norm = [](const Tensor& t, int i, int C) {
    double n = 0.0;
    for (int c = 0; c < C; ++c) n += t[int64_t(i) * C + c] * t[int64_t(i) * C + c];
    return n;  // 0 or 1 after normalization
  };

  std::vector<int> rows = subset ? *subset : detail::all_rows(P);
  std::vector<int> out(rows.size(), 0);
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < static_cast<int64_t>(rows.size()); ++s) {
    int i = rows[static_cast<size_t>(s)];
    double nu = row_norm(rc, i, Cr) + row_norm(dc, i, Cd);
    double best = std::numeric_limits<double>::infinity();
    int bj = 0;
    for (int j = 0; j < Q; ++j) {
      double nv = row_norm(rs, j, Cr) + row_norm(ds, j, Cd);
      double dist;
      if (nu == 0.0 || nv == 0.0) {
        dist = 1.0;
      } else {
        double dot = 0.0;
        for (int c = 0; c < Cr; ++c) dot += rc[int64_t(i) * Cr + c] * rs[int64_t(j) * Cr + c];
        for (int c = 0; c < Cd; ++c) dot += dc[int64_t(i) * Cd + c] * ds[int64_t(j) * Cd + c];
        dist = 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
      }
      if (dist < best) {
        best = dist;
        bj = j;
      }
    }
    out[static_cast<size_t>(s)] = bj;
  }
  return out;
}

/// Geometry-aware matching loss: per-modality cosine distances at the joint
/// nearest index. `depth_weight` scales the depth term (1 = the plain sum).
inline StyleLoss geometry_aware_loss(const ad::Var& rgb_c, const ad::Var& depth_c,
                                     const Tensor& rgb_s, const Tensor& depth_s,
                                     double depth_weight = 1.0,
                                     const std::vector<int>* subset = nullptr) {
  const int P = rgb_c.val().dim(0);
  std::vector<int> rows = subset ? *subset : detail::all_rows(P);
  std::vector<int> match =
      joint_nearest_index(rgb_c.val(), depth_c.val(), rgb_s, depth_s, &rows);

  NormalizedRows rn = normalize_features(rgb_c);
  NormalizedRows dn = normalize_features(depth_c);
  Tensor rsn = detail::normalized_rows(rgb_s);
  Tensor dsn = detail::normalized_rows(depth_s);

  ad::Var loss = ad::add(detail::fixed_pair_loss(rn.rows, rsn, rows, match),
                         ad::scale(detail::fixed_pair_loss(dn.rows, dsn, rows, match),
                                   depth_weight));
  MatchResult mr;
  mr.indices.assign(static_cast<size_t>(P), -1);
  mr.distances.assign(static_cast<size_t>(P), 0.0);
  for (size_t s = 0; s < rows.size(); ++s) mr.indices[static_cast<size_t>(rows[s])] = match[s];
  mr.loss = loss.scalar();
  return StyleLoss{loss, std::move(mr)};
}

// ---------------------------------------------------------------------------
// Patch-wise matching

/// k x k feature patches with dilation r, anchors on a regular stride grid.
struct PatchSet {
  int k = 1, r = 1, stride = 1;
  int map_h = 0, map_w = 0;
  int anchors_y = 0, anchors_x = 0;
  /// Linear position (y*W + x) of every patch member, patch-major.
  std::vector<int> positions;

  int count() const { return anchors_y * anchors_x; }
  int members() const { return k * k; }
};

/// Enumerate patches over an H x W map. The default stride (0) uses the
/// effective extent (k-1)*r + 1, partitioning the map into disjoint patches.
inline PatchSet extract_patches(int H, int W, int k, int r, int stride = 0) {
  VXS_CHECK(k >= 1 && r >= 1, InvalidInput, "extract_patches: k and r must be >= 1");
  int ext = (k - 1) * r + 1;
  VXS_CHECK(ext <= H && ext <= W, InvalidInput,
            "extract_patches: dilated patch extent exceeds the feature map");
  if (stride <= 0) stride = ext;
  PatchSet ps;
  ps.k = k;
  ps.r = r;
  ps.stride = stride;
  ps.map_h = H;
  ps.map_w = W;
  ps.anchors_y = (H - ext) / stride + 1;
  ps.anchors_x = (W - ext) / stride + 1;
  ps.positions.reserve(static_cast<size_t>(ps.count()) * ps.members());
  for (int ay = 0; ay < ps.anchors_y; ++ay)
    for (int ax = 0; ax < ps.anchors_x; ++ax)
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          ps.positions.push_back((ay * stride + a * r) * W + (ax * stride + b * r));
  return ps;
}

inline PatchSet extract_patches(const Tensor& map_hwc, int k, int r, int stride = 0) {
  VXS_CHECK(map_hwc.ndim() == 3, InvalidInput, "extract_patches expects [H,W,C]");
  return extract_patches(map_hwc.dim(0), map_hwc.dim(1), k, r, stride);
}

/// Patch-wise style loss: mean over content patches of the minimum
/// aligned-position cosine-distance sum over style patches.
/// `patch_subset` restricts the mean to the listed content patches.
inline StyleLoss patch_loss(const ad::Var& content_map, const Tensor& style_map,
                            const PatchSet& pc, const PatchSet& ps,
                            const std::vector<int>* patch_subset = nullptr) {
  VXS_CHECK(pc.k == ps.k && pc.r == ps.r, InvalidInput,
            "patch_loss: content and style patch sets use different k or r");
  const Tensor& cm = content_map.val();
  VXS_CHECK(cm.ndim() == 3 && style_map.ndim() == 3, InvalidInput, "patch_loss expects [H,W,C]");
  VXS_CHECK(cm.dim(2) == style_map.dim(2), InvalidInput, "patch_loss: channel mismatch");
  VXS_CHECK(cm.dim(0) == pc.map_h && cm.dim(1) == pc.map_w, InvalidInput,
            "patch_loss: content patch set does not match the map");
  VXS_CHECK(style_map.dim(0) == ps.map_h && style_map.dim(1) == ps.map_w, InvalidInput,
            "patch_loss: style patch set does not match the map");
  const int C = cm.dim(2);
  const int M = pc.members();

  ad::Var content_rows = as_rows(content_map);
  NormalizedRows cn = normalize_features(content_rows);
  Tensor sn = detail::normalized_rows(
      Tensor({style_map.dim(0) * style_map.dim(1), C}, style_map.data));

  std::vector<int> patches = patch_subset ? *patch_subset : detail::all_rows(pc.count());
  for (int p : patches)
    VXS_CHECK(p >= 0 && p < pc.count(), InvalidInput, "patch_loss: patch subset out of range");
  VXS_CHECK(!patches.empty(), InvalidInput, "patch_loss: empty patch subset");

  const Tensor& cnv = cn.rows.val();
  std::vector<int> match(patches.size(), 0);
  std::vector<double> dist(patches.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < static_cast<int64_t>(patches.size()); ++s) {
    int pi = patches[static_cast<size_t>(s)];
    const int* cpos = pc.positions.data() + int64_t(pi) * M;
    double best = -std::numeric_limits<double>::infinity();
    int bj = 0;
    for (int pj = 0; pj < ps.count(); ++pj) {
      const int* spos = ps.positions.data() + int64_t(pj) * M;
      double dot = 0.0;
      for (int m = 0; m < M; ++m) {
        const double* cu = cnv.data.data() + int64_t(cpos[m]) * C;
        const double* sv = sn.data.data() + int64_t(spos[m]) * C;
        for (int c = 0; c < C; ++c) dot += cu[c] * sv[c];
      }
      if (dot > best) {
        best = dot;
        bj = pj;
      }
    }
    match[static_cast<size_t>(s)] = bj;
    dist[static_cast<size_t>(s)] = M - best;  // sum of per-position distances
  }

  double acc = 0.0;
  for (double d : dist) acc += d;
  acc /= static_cast<double>(patches.size());

  Tensor sn_copy = sn;
  auto pc_pos = pc.positions;
  auto ps_pos = ps.positions;
  ad::Var cn_rows = cn.rows;
  int64_t n = static_cast<int64_t>(patches.size());
  ad::Var loss = ad::make_op(
      Tensor::scalar(acc), {cn_rows},
      [cn_rows, sn_copy, pc_pos, ps_pos, patches, match, C, M, n](ad::Node& node) {
        auto& g = cn_rows.grad();
        double go = node.grad[0] / static_cast<double>(n);
        for (size_t s = 0; s < patches.size(); ++s) {
          const int* cpos = pc_pos.data() + int64_t(patches[s]) * M;
          const int* spos = ps_pos.data() + int64_t(match[s]) * M;
          for (int m = 0; m < M; ++m)
            for (int c = 0; c < C; ++c)
              g[int64_t(cpos[m]) * C + c] -= go * sn_copy[int64_t(spos[m]) * C + c];
        }
      });

  MatchResult mr;
  mr.indices.assign(static_cast<size_t>(pc.count()), -1);
  mr.distances.assign(static_cast<size_t>(pc.count()), 0.0);
  for (size_t s = 0; s < patches.size(); ++s) {
    mr.indices[static_cast<size_t>(patches[s])] = match[s];
    mr.distances[static_cast<size_t>(patches[s])] = dist[s];
  }
  mr.loss = acc;
  return StyleLoss{loss, std::move(mr)};
}

}  // namespace vxs
