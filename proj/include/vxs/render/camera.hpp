#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "vxs/core/error.hpp"
#include "vxs/core/tensor.hpp"

namespace vxs {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  VXS_CHECK(n > 0.0, InvalidInput, "cannot normalize zero vector");
  return a * (1.0 / n);
}

/// Pinhole camera. Right-handed camera frame: x right, y up, looking down -z.
/// `rotation` is the camera-to-world rotation (row-major 3x3), `position` the
/// camera center in world space. Pixel rows increase downward in the image.
struct Camera {
  double fx = 100.0, fy = 100.0;
  double cx = 32.0, cy = 32.0;
  int width = 64, height = 64;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 position{0, 0, 0};

  void validate() const {
    VXS_CHECK(fx > 0.0 && fy > 0.0, InvalidInput, "camera focal lengths must be positive");
    VXS_CHECK(width >= 1 && height >= 1, InvalidInput, "camera image size must be positive");
    // R^T R = I within 1e-6
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += rotation[k * 3 + i] * rotation[k * 3 + j];
        double expect = (i == j) ? 1.0 : 0.0;
        VXS_CHECK(std::abs(s - expect) < 1e-6, InvalidInput,
                  "camera rotation is not orthonormal");
      }
    VXS_CHECK(det() > 0.0, InvalidInput,
              "camera rotation has negative determinant (reflection)");
  }

  double det() const {
    const auto& r = rotation;
    return r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
           r[2] * (r[3] * r[7] - r[4] * r[6]);
  }

  Vec3 rotate(const Vec3& v) const {
    return {rotation[0] * v[0] + rotation[1] * v[1] + rotation[2] * v[2],
            rotation[3] * v[0] + rotation[4] * v[1] + rotation[5] * v[2],
            rotation[6] * v[0] + rotation[7] * v[1] + rotation[8] * v[2]};
  }

  /// World-space viewing direction (camera -z axis).
  Vec3 forward() const { return {-rotation[2], -rotation[5], -rotation[8]}; }

  /// Unit ray direction through pixel coordinates (px, py).
  Vec3 pixel_ray(double px, double py) const {
    Vec3 d{(px - cx) / fx, (cy - py) / fy, -1.0};
    return normalized(rotate(d));
  }

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int w, int h) {
    Vec3 f = normalized(target - eye);
    Vec3 s = normalized(cross(f, up));
    Vec3 u = cross(s, f);
    Camera c;
    c.fx = c.fy = focal;
    c.cx = w * 0.5;
    c.cy = h * 0.5;
    c.width = w;
    c.height = h;
    // Columns of R are the camera axes (x=s, y=u, z=-f) in world space.
    c.rotation = {s[0], u[0], -f[0], s[1], u[1], -f[1], s[2], u[2], -f[2]};
    c.position = eye;
    return c;
  }
};

struct RayBatch {
  Tensor origins;     // [N,3]
  Tensor directions;  // [N,3] unit vectors
};

/// Rays through explicit pixel coordinates.
inline RayBatch generate_rays(const Camera& cam, const std::vector<std::array<double, 2>>& px) {
  cam.validate();
  int n = static_cast<int>(px.size());
  RayBatch rb{Tensor({n, 3}), Tensor({n, 3})};
  for (int i = 0; i < n; ++i) {
    Vec3 d = cam.pixel_ray(px[size_t(i)][0], px[size_t(i)][1]);
    for (int k = 0; k < 3; ++k) {
      rb.origins[int64_t(i) * 3 + k] = cam.position[size_t(k)];
      rb.directions[int64_t(i) * 3 + k] = d[size_t(k)];
    }
  }
  return rb;
}

/// Full-image rays in row-major order through pixel centers.
inline RayBatch generate_rays(const Camera& cam) {
  std::vector<std::array<double, 2>> px;
  px.reserve(size_t(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) px.push_back({x + 0.5, y + 0.5});
  return generate_rays(cam, px);
}

/// Slab-method ray/AABB intersection. Returns false on a miss.
inline bool ray_box(const Vec3& o, const Vec3& d, const Vec3& bmin, const Vec3& bmax,
                    double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[size_t(k)]) < 1e-12) {
      if (o[size_t(k)] < bmin[size_t(k)] || o[size_t(k)] > bmax[size_t(k)]) return false;
      continue;
    }
    double inv = 1.0 / d[size_t(k)];
    double ta = (bmin[size_t(k)] - o[size_t(k)]) * inv;
    double tb = (bmax[size_t(k)] - o[size_t(k)]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return t1 > 0.0;
}

}  // namespace vxs
