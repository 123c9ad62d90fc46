#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "vxs/core/error.hpp"
#include "vxs/core/tensor.hpp"

namespace vxs {

static_assert(std::endian::native == std::endian::little,
              "little-endian host assumed for raw payload I/O");

/// 8-bit RGB PNG from a [H,W,3] tensor in [0,1].
inline void save_png_rgb8(const std::string& path, const Tensor& img) {
  VXS_CHECK(img.ndim() == 3 && img.dim(2) == 3, InvalidInput, "save_png_rgb8 expects [H,W,3]");
  const int H = img.dim(0), W = img.dim(1);
  cv::Mat m(H, W, CV_8UC3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        double v = img.at(y, x, c);
        v = std::min(1.0, std::max(0.0, v));
        px[2 - c] = static_cast<uchar>(std::lround(v * 255.0));  // BGR order
      }
    }
  VXS_CHECK(cv::imwrite(path, m), IoError, "failed to write PNG: " + path);
}

inline Tensor load_png_rgb8(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  VXS_CHECK(!m.empty(), IoError, "failed to read image: " + path);
  Tensor img({m.rows, m.cols, 3});
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = px[2 - c] / 255.0;
    }
  return img;
}

/// 16-bit grayscale PNG of (v - vmin) / (vmax - vmin).
inline void save_png_gray16(const std::string& path, const Tensor& img, double vmin,
                            double vmax) {
  VXS_CHECK(img.ndim() == 2, InvalidInput, "save_png_gray16 expects [H,W]");
  const int H = img.dim(0), W = img.dim(1);
  double scale = (vmax > vmin) ? 65535.0 / (vmax - vmin) : 0.0;
  cv::Mat m(H, W, CV_16UC1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = (img.at(y, x) - vmin) * scale;
      v = std::min(65535.0, std::max(0.0, v));
      m.at<uint16_t>(y, x) = static_cast<uint16_t>(std::lround(v));
    }
  VXS_CHECK(cv::imwrite(path, m), IoError, "failed to write PNG: " + path);
}

/// 16-bit grayscale PNG as values in [0,1].
inline Tensor load_png_gray16(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  VXS_CHECK(!m.empty(), IoError, "failed to read image: " + path);
  VXS_CHECK(m.channels() == 1, FormatError, "expected single-channel depth PNG: " + path);
  Tensor img({m.rows, m.cols});
  if (m.depth() == CV_16U) {
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x) img.at(y, x) = m.at<uint16_t>(y, x) / 65535.0;
  } else if (m.depth() == CV_8U) {
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x) img.at(y, x) = m.at<uchar>(y, x) / 255.0;
  } else {
    throw FormatError("unsupported depth PNG bit depth: " + path);
  }
  return img;
}

/// Raw float32 little-endian depth sidecar: u32 width, u32 height, then
/// height*width row-major float32 values.
inline void save_raw_f32(const std::string& path, const Tensor& img) {
  VXS_CHECK(img.ndim() == 2, InvalidInput, "save_raw_f32 expects [H,W]");
  std::ofstream f(path, std::ios::binary);
  VXS_CHECK(f.good(), IoError, "cannot open for write: " + path);
  uint32_t w = static_cast<uint32_t>(img.dim(1)), h = static_cast<uint32_t>(img.dim(0));
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  for (double v : img.data) {
    float fv = static_cast<float>(v);
    f.write(reinterpret_cast<const char*>(&fv), 4);
  }
  VXS_CHECK(f.good(), IoError, "write failed: " + path);
}

inline Tensor load_raw_f32(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  VXS_CHECK(f.good(), IoError, "cannot open: " + path);
  uint32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  VXS_CHECK(f.good() && w > 0 && h > 0, FormatError, "bad raw f32 header: " + path);
  Tensor img({static_cast<int>(h), static_cast<int>(w)});
  for (auto& v : img.data) {
    float fv;
    f.read(reinterpret_cast<char*>(&fv), 4);
    v = fv;
  }
  VXS_CHECK(f.good(), FormatError, "truncated raw f32 payload: " + path);
  return img;
}

/// Anti-aliased area-average resampling of [H,W] or [H,W,C] images, exact
/// for constant inputs (weights are normalized per output pixel).
inline Tensor resample_area(const Tensor& img, int new_h, int new_w) {
  VXS_CHECK(img.ndim() == 2 || img.ndim() == 3, InvalidInput, "resample_area: bad rank");
  VXS_CHECK(new_h >= 1 && new_w >= 1, InvalidInput, "resample_area: bad target size");
  const int H = img.dim(0), W = img.dim(1);
  const int C = img.ndim() == 3 ? img.dim(2) : 1;
  if (new_h == H && new_w == W) return img;

  Tensor out(img.ndim() == 3 ? std::vector<int>{new_h, new_w, C}
                             : std::vector<int>{new_h, new_w});
  const double sy = double(H) / new_h, sx = double(W) / new_w;
  for (int oy = 0; oy < new_h; ++oy) {
    double y0 = oy * sy, y1 = (oy + 1) * sy;
    int iy0 = static_cast<int>(y0), iy1 = std::min(H - 1, static_cast<int>(std::ceil(y1)) - 1);
    for (int ox = 0; ox < new_w; ++ox) {
      double x0 = ox * sx, x1 = (ox + 1) * sx;
      int ix0 = static_cast<int>(x0), ix1 = std::min(W - 1, static_cast<int>(std::ceil(x1)) - 1);
      double wsum = 0.0;
      std::vector<double> acc(size_t(C), 0.0);
      for (int iy = iy0; iy <= iy1; ++iy) {
        double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
        for (int ix = ix0; ix <= ix1; ++ix) {
          double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
          double wgt = wy * wx;
          wsum += wgt;
          for (int c = 0; c < C; ++c) acc[size_t(c)] += wgt * img[(int64_t(iy) * W + ix) * C + c];
        }
      }
      for (int c = 0; c < C; ++c)
        out[(int64_t(oy) * new_w + ox) * C + c] = acc[size_t(c)] / wsum;
    }
  }
  return out;
}

}  // namespace vxs
