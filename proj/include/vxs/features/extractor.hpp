#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
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

// ---------------------------------------------------------------------------
// Differentiable conv / pooling primitives. Filter weights are constants of
// the graph; gradients flow to the input image only.

/// 3x3 convolution, stride 1, clamp (replicate) padding. Replicate padding
/// keeps constant images constant, which the degenerate SIFID case relies on.
inline ad::Var conv3x3_clamp(const ad::Var& input, std::shared_ptr<const Tensor> weight,
                             std::shared_ptr<const Tensor> bias) {
  const Tensor& in = input.val();
  VXS_CHECK(in.ndim() == 3, InvalidInput, "conv3x3 expects [H,W,C]");
  const int H = in.dim(0), W = in.dim(1), Cin = in.dim(2);
  const int Cout = weight->dim(0);
  VXS_CHECK(weight->dim(1) == Cin, InvalidInput, "conv3x3: channel mismatch");
  VXS_CHECK(H >= 2 && W >= 2, InvalidInput, "conv3x3: image too small");

  Tensor out({H, W, Cout});
  const double* wp = weight->data.data();
  const double* bp = bias->data.data();
  const double* ip = in.data.data();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    std::vector<double> patch(size_t(Cin) * 9);
    for (int x = 0; x < W; ++x) {
      for (int ky = 0; ky < 3; ++ky) {
        int iy = std::min(H - 1, std::max(0, y + ky - 1));
        for (int kx = 0; kx < 3; ++kx) {
          int ix = std::min(W - 1, std::max(0, x + kx - 1));
          const double* src = ip + (int64_t(iy) * W + ix) * Cin;
          double* dst = patch.data() + (ky * 3 + kx) * Cin;
          std::memcpy(dst, src, size_t(Cin) * sizeof(double));
        }
      }
      double* op = out.data.data() + (int64_t(y) * W + x) * Cout;
      for (int co = 0; co < Cout; ++co) {
        // weight layout [Cout, Cin, 3, 3] -> per (ky,kx,ci) gather
        const double* wrow = wp + int64_t(co) * Cin * 9;
        double acc = bp[co];
        for (int ci = 0; ci < Cin; ++ci) {
          const double* wk = wrow + int64_t(ci) * 9;
          for (int k = 0; k < 9; ++k) acc += wk[k] * patch[size_t(k) * size_t(Cin) + size_t(ci)];
        }
        op[co] = acc;
      }
    }
  }

  return ad::make_op(std::move(out), {input}, [input, weight, H, W, Cin, Cout](ad::Node& n) {
    auto& gin = input.grad();
    const double* wp = weight->data.data();
    const double* gout = n.grad.data.data();
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < H; ++iy) {
      for (int ix = 0; ix < W; ++ix) {
        double* gp = gin.data.data() + (int64_t(iy) * W + ix) * Cin;
        for (int ky = 0; ky < 3; ++ky) {
          // output rows whose clamped tap (ky) reads input row iy
          int ylo, yhi;
          if (iy == 0) {
            ylo = 0;
            yhi = std::min(H - 1, 1 - ky);
          } else if (iy == H - 1) {
            ylo = std::max(0, H - ky);
            yhi = H - 1;
          } else {
            ylo = yhi = iy + 1 - ky;
            if (ylo < 0 || ylo > H - 1) continue;
          }
          if (ylo > yhi) continue;
          for (int kx = 0; kx < 3; ++kx) {
            int xlo, xhi;
            if (ix == 0) {
              xlo = 0;
              xhi = std::min(W - 1, 1 - kx);
            } else if (ix == W - 1) {
              xlo = std::max(0, W - kx);
              xhi = W - 1;
            } else {
              xlo = xhi = ix + 1 - kx;
              if (xlo < 0 || xlo > W - 1) continue;
            }
            if (xlo > xhi) continue;
            for (int oy = ylo; oy <= yhi; ++oy)
              for (int ox = xlo; ox <= xhi; ++ox) {
                const double* gorow = gout + (int64_t(oy) * W + ox) * Cout;
                for (int ci = 0; ci < Cin; ++ci) {
                  double acc = 0.0;
                  for (int co = 0; co < Cout; ++co)
                    acc += wp[(int64_t(co) * Cin + ci) * 9 + ky * 3 + kx] * gorow[co];
                  gp[ci] += acc;
                }
              }
          }
        }
      }
    }
  });
}

/// 2x2 average pooling, stride 2 (floor semantics on odd sizes).
inline ad::Var avgpool2(const ad::Var& input) {
  const Tensor& in = input.val();
  VXS_CHECK(in.ndim() == 3, InvalidInput, "avgpool2 expects [H,W,C]");
  const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
  const int Ho = H / 2, Wo = W / 2;
  VXS_CHECK(Ho >= 1 && Wo >= 1, InvalidInput, "avgpool2: image too small");
  Tensor out({Ho, Wo, C});
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            acc += in[(int64_t(2 * y + dy) * W + (2 * x + dx)) * C + c];
        out[(int64_t(y) * Wo + x) * C + c] = 0.25 * acc;
      }
  return ad::make_op(std::move(out), {input}, [input, H, W, C, Ho, Wo](ad::Node& n) {
    auto& g = input.grad();
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x)
        for (int c = 0; c < C; ++c) {
          double go = 0.25 * n.grad[(int64_t(y) * Wo + x) * C + c];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              g[(int64_t(2 * y + dy) * W + (2 * x + dx)) * C + c] += go;
        }
  });
}

// ---------------------------------------------------------------------------
// Feature maps

struct LayerFeatures {
  std::string name;
  int factor = 1;  // spatial downsampling factor relative to the input
  ad::Var map;     // [H,W,C]
};

struct FeatureMap {
  std::vector<LayerFeatures> layers;
  int source_h = 0;
  int source_w = 0;

  const LayerFeatures& layer(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return l;
    throw InvalidInput("feature map has no layer named " + name);
  }
};

/// L2-normalize each row of a [P,C] tensor. Zero rows pass through with a
/// flag; their gradient is zero.
struct NormalizedRows {
  ad::Var rows;
  std::vector<uint8_t> zero_flags;
};

inline NormalizedRows normalize_features(const ad::Var& rows) {
  const Tensor& in = rows.val();
  VXS_CHECK(in.ndim() == 2, InvalidInput, "normalize_features expects [P,C]");
  const int P = in.dim(0), C = in.dim(1);
  Tensor out = in;
  NormalizedRows res;
  res.zero_flags.assign(size_t(P), 0);
  std::vector<double> norms(static_cast<size_t>(P), 0.0);
  for (int i = 0; i < P; ++i) {
    double n2 = 0.0;
    for (int c = 0; c < C; ++c) n2 += in[int64_t(i) * C + c] * in[int64_t(i) * C + c];
    double n = std::sqrt(n2);
    norms[size_t(i)] = n;
    if (n == 0.0) {
      res.zero_flags[size_t(i)] = 1;
      continue;
    }
    for (int c = 0; c < C; ++c) out[int64_t(i) * C + c] /= n;
  }
  res.rows = ad::make_op(std::move(out), {rows}, [rows, norms, P, C](ad::Node& n) {
    auto& g = rows.grad();
    for (int i = 0; i < P; ++i) {
      double nn = norms[size_t(i)];
      if (nn == 0.0) continue;
      double dotgy = 0.0;
      for (int c = 0; c < C; ++c) dotgy += n.grad[int64_t(i) * C + c] * n.val[int64_t(i) * C + c];
      for (int c = 0; c < C; ++c)
        g[int64_t(i) * C + c] +=
            (n.grad[int64_t(i) * C + c] - dotgy * n.val[int64_t(i) * C + c]) / nn;
    }
  });
  return res;
}

/// Flatten a [H,W,C] feature layer into [H*W, C] position rows.
inline ad::Var as_rows(const ad::Var& map) {
  const Tensor& m = map.val();
  VXS_CHECK(m.ndim() == 3, InvalidInput, "as_rows expects [H,W,C]");
  return ad::reshape(map, {m.dim(0) * m.dim(1), m.dim(2)});
}

// ---------------------------------------------------------------------------
// Extractor

/// Fixed small conv stack mirroring the first three blocks of a VGG-16-style
/// network: 3x3 convolutions with ReLU, 2x2 stride-2 average pooling between
/// blocks, taps at post-activation block outputs.
class FeatureExtractor {
 public:
  struct ConvLayer {
    std::string name;
    int in_ch = 0, out_ch = 0;
    std::shared_ptr<Tensor> weight;  // [Cout,Cin,3,3]
    std::shared_ptr<Tensor> bias;    // [Cout]
  };

  struct Config {
    std::vector<std::string> taps{"block2", "block3"};
    std::array<double, 3> input_mean{0.0, 0.0, 0.0};
  };

  static constexpr int kMinInput = 8;

  /// Layer plan: (block, in_ch, out_ch) mirroring VGG-16 blocks 1-3 at desk
  /// scale (2+2+3 convolutions).
  static std::vector<std::array<int, 3>> architecture() {
    return {{1, 3, 16}, {1, 16, 16}, {2, 16, 32}, {2, 32, 32},
            {3, 32, 64}, {3, 64, 64}, {3, 64, 64}};
  }

  static std::string layer_name(int block, int index_in_block) {
    return "block" + std::to_string(block) + "_conv" + std::to_string(index_in_block);
  }

  /// Deterministic weight-free fallback: per-layer row-orthogonalized
  /// Gaussian filters (gain sqrt(2) for ReLU), zero biases.
  static FeatureExtractor fallback(uint64_t seed) {
    FeatureExtractor fe;
    fe.id_ = "fallback(seed=" + std::to_string(seed) + ")";
    Rng rng(splitmix64(seed ^ 0x9e3779b97f4a7c15ULL));
    int idx_in_block = 0, prev_block = 0;
    for (auto [block, cin, cout] : architecture()) {
      idx_in_block = (block == prev_block) ? idx_in_block + 1 : 1;
      prev_block = block;
      ConvLayer l;
      l.name = layer_name(block, idx_in_block);
      l.in_ch = cin;
      l.out_ch = cout;
      int fanin = cin * 9;
      Tensor w({cout, cin, 3, 3});
      for (auto& v : w.data) v = rng.normal();
      // Gram-Schmidt over filter rows
      for (int r = 0; r < cout; ++r) {
        double* row = w.data.data() + int64_t(r) * fanin;
        for (int p = 0; p < r; ++p) {
          const double* prev = w.data.data() + int64_t(p) * fanin;
          double d = 0.0;
          for (int k = 0; k < fanin; ++k) d += row[k] * prev[k];
          for (int k = 0; k < fanin; ++k) row[k] -= d * prev[k];
        }
        double n = 0.0;
        for (int k = 0; k < fanin; ++k) n += row[k] * row[k];
        n = std::sqrt(n);
        VXS_CHECK(n > 1e-9, NumericError, "fallback orthogonalization degenerated");
        for (int k = 0; k < fanin; ++k) row[k] /= n;
      }
      double gain = std::sqrt(2.0);
      // quantize to float32 so GTFW round trips are bit-exact
      for (auto& v : w.data) v = double(static_cast<float>(v * gain));
      l.weight = std::make_shared<Tensor>(std::move(w));
      l.bias = std::make_shared<Tensor>(Tensor({cout}));
      fe.layers_.push_back(std::move(l));
    }
    return fe;
  }

  const std::string& id() const { return id_; }
  Config& config() { return cfg_; }
  const Config& config() const { return cfg_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  static int block_of(const std::string& layer_name) {
    return layer_name[5] - '0';  // "blockN_convM"
  }

  /// Downsampling factor of a tap (pooling happens between blocks).
  static int tap_factor(const std::string& tap) {
    if (tap == "block1") return 1;
    if (tap == "block2") return 2;
    if (tap == "block3") return 4;
    throw ConfigError("unknown tap name: " + tap);
  }

  /// Post-activation responses of the configured tap layers. Deterministic
  /// for fixed weights and input, differentiable w.r.t. the image.
  FeatureMap extract(const ad::Var& image) const {
    const Tensor& img = image.val();
    VXS_CHECK(img.ndim() == 3 && img.dim(2) == 3, InvalidInput,
              "extract expects a 3-channel [H,W,3] image");
    VXS_CHECK(img.dim(0) >= kMinInput && img.dim(1) >= kMinInput, InvalidInput,
              "extract: image smaller than the minimum supported size");
    VXS_CHECK(img.all_finite(), InvalidInput, "extract: non-finite image values");

    ad::Var x = image;
    if (cfg_.input_mean != std::array<double, 3>{0, 0, 0}) {
      Tensor m(img.shape);
      for (int64_t i = 0; i < img.numel(); ++i) m[i] = cfg_.input_mean[size_t(i % 3)];
      x = ad::sub(x, ad::constant(std::move(m)));
    }

    FeatureMap fm;
    fm.source_h = img.dim(0);
    fm.source_w = img.dim(1);
    int cur_block = 1;
    for (size_t li = 0; li < layers_.size(); ++li) {
      int block = block_of(layers_[li].name);
      if (block != cur_block) {
        maybe_tap(fm, cur_block, x);
        x = avgpool2(x);
        cur_block = block;
      }
      x = ad::relu(conv3x3_clamp(x, layers_[li].weight, layers_[li].bias));
    }
    maybe_tap(fm, cur_block, x);
    VXS_CHECK(fm.layers.size() == cfg_.taps.size(), ConfigError,
              "configured tap was not produced (unknown block name?)");
    return fm;
  }

  FeatureMap extract(const Tensor& image) const { return extract(ad::constant(image)); }

  // --- GTFW weight archive -------------------------------------------------
  // magic "GTFW", u32 version, u32 layer_count, then per layer a name
  // (u16 length + bytes) and shape (u8 ndim + u32 dims), then all float32
  // little-endian payloads concatenated in table order.

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    VXS_CHECK(f.good(), IoError, "cannot open for write: " + path);
    auto wr_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto wr_u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    f.write("GTFW", 4);
    wr_u32(1);
    std::vector<std::pair<std::string, const Tensor*>> entries = table();
    wr_u32(static_cast<uint32_t>(entries.size()));
    for (auto& [name, t] : entries) {
      wr_u16(static_cast<uint16_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      uint8_t nd = static_cast<uint8_t>(t->ndim());
      f.write(reinterpret_cast<const char*>(&nd), 1);
      for (int d = 0; d < t->ndim(); ++d) wr_u32(static_cast<uint32_t>(t->dim(d)));
    }
    for (auto& [name, t] : entries) {
      for (double v : t->data) {
        float fv = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&fv), 4);
      }
    }
    VXS_CHECK(f.good(), IoError, "write failed: " + path);
  }

  static FeatureExtractor from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    VXS_CHECK(f.good(), IoError, "cannot open weight archive: " + path);
    char magic[4];
    f.read(magic, 4);
    VXS_CHECK(f.good() && std::memcmp(magic, "GTFW", 4) == 0, FormatError,
              "bad magic in weight archive: " + path);
    auto rd_u32 = [&]() {
      uint32_t v = 0;
      f.read(reinterpret_cast<char*>(&v), 4);
      return v;
    };
    uint32_t version = rd_u32();
    VXS_CHECK(version == 1, FormatError,
              "unsupported weight archive version " + std::to_string(version));
    uint32_t count = rd_u32();

    FeatureExtractor fe = fallback(0);  // structure template; payloads replaced below
    fe.id_ = "gtfw:" + path;
    auto expected = fe.table_mutable();
    VXS_CHECK(count == expected.size(), FormatError,
              "weight archive has " + std::to_string(count) + " layers, expected " +
                  std::to_string(expected.size()));

    for (auto& [name, tensor] : expected) {
      uint16_t len = 0;
      f.read(reinterpret_cast<char*>(&len), 2);
      std::string got(len, '\0');
      f.read(got.data(), len);
      uint8_t nd = 0;
      f.read(reinterpret_cast<char*>(&nd), 1);
      VXS_CHECK(f.good(), FormatError, "truncated layer table at " + name);
      VXS_CHECK(got == name, FormatError,
                "weight archive layer order mismatch: expected " + name + ", found " + got);
      VXS_CHECK(nd == tensor->ndim(), FormatError, "rank mismatch for layer " + name);
      for (int d = 0; d < tensor->ndim(); ++d) {
        uint32_t dim = rd_u32();
        VXS_CHECK(static_cast<int>(dim) == tensor->dim(d), FormatError,
                  "shape mismatch for layer " + name);
      }
    }
    for (auto& [name, tensor] : expected) {
      for (auto& v : tensor->data) {
        float fv = 0;
        f.read(reinterpret_cast<char*>(&fv), 4);
        VXS_CHECK(f.good(), FormatError, "truncated payload for layer " + name);
        v = fv;
      }
    }
    return fe;
  }

 private:
  void maybe_tap(FeatureMap& fm, int block, const ad::Var& x) const {
    std::string name = "block" + std::to_string(block);
    for (const auto& tap : cfg_.taps)
      if (tap == name) fm.layers.push_back({name, tap_factor(name), x});
  }

  std::vector<std::pair<std::string, const Tensor*>> table() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& l : layers_) {
      out.emplace_back(l.name + ".weight", l.weight.get());
      out.emplace_back(l.name + ".bias", l.bias.get());
    }
    return out;
  }
  std::vector<std::pair<std::string, Tensor*>> table_mutable() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& l : layers_) {
      out.emplace_back(l.name + ".weight", l.weight.get());
      out.emplace_back(l.name + ".bias", l.bias.get());
    }
    return out;
  }

  std::vector<ConvLayer> layers_;
  Config cfg_;
  std::string id_ = "uninitialized";
};

}  // namespace vxs
