// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/geometry.hpp"

#include <cmath>

namespace npg {

void Camera::validate() const {
  const Mat3 gram = rotation.transpose() * rotation;
  NPG_CHECK((gram - Mat3::Identity()).cwiseAbs().maxCoeff() < real(1e-8),
            "camera rotation is not orthonormal");
  NPG_CHECK(std::abs(rotation.determinant() - real(1)) < real(1e-8),
            "camera rotation determinant is " << rotation.determinant());
  NPG_CHECK(fx > real(0) && fy > real(0), "camera focal lengths must be positive");
  NPG_CHECK(width > 0 && height > 0, "camera image size must be positive");
}

Mat4 Camera::world_to_camera_matrix() const {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = rotation;
  m.block<3, 1>(0, 3) = translation;
  return m;
}

real bounding_box_diagonal(std::span<const Vec3> points) {
  NPG_CHECK(!points.empty(), "bounding_box_diagonal: empty point set");
  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

PixelProjection project(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.to_camera(point);
  PixelProjection out;
  out.depth = pc.z();
  if (pc.z() <= real(1e-8)) {
    out.visible = false;
    return out;
  }
  out.u = camera.fx * pc.x() / pc.z() + camera.cx;
  out.v = camera.fy * pc.y() / pc.z() + camera.cy;
  out.visible = true;
  return out;
}

std::vector<PixelProjection> project(const Camera& camera, std::span<const Vec3> points) {
  std::vector<PixelProjection> out(points.size());
  for (size_t i = 0; i < points.size(); ++i) out[i] = project(camera, points[i]);
  return out;
}

RotationParam RotationParam::normalized() const {
  const real n = std::sqrt(w * w + x * x + y * y + z * z);
  NPG_CHECK(n > real(1e-12), "zero quaternion cannot be normalized");
  return {w / n, x / n, y / n, z / n};
}

Mat3 RotationParam::to_matrix() const {
  const RotationParam q = normalized();
  Mat3 m;
  m << 1 - 2 * (q.y * q.y + q.z * q.z), 2 * (q.x * q.y - q.z * q.w), 2 * (q.x * q.z + q.y * q.w),
      2 * (q.x * q.y + q.z * q.w), 1 - 2 * (q.x * q.x + q.z * q.z), 2 * (q.y * q.z - q.x * q.w),
      2 * (q.x * q.z - q.y * q.w), 2 * (q.y * q.z + q.x * q.w), 1 - 2 * (q.x * q.x + q.y * q.y);
  return m;
}

RotationParam RotationParam::from_matrix(const Mat3& m) {
  Eigen::Quaternion<real> q(m);
  q.normalize();
  return {q.w(), q.x(), q.y(), q.z()};
}

void bilinear_sample(const ImageBuffer& buffer, real x, real y, std::span<real> out) {
  NPG_CHECK(int(out.size()) == buffer.channels, "bilinear_sample: output span size");
  NPG_CHECK(std::isfinite(x) && std::isfinite(y), "bilinear_sample: non-finite location");
  const int W = buffer.width, H = buffer.height;
  x = std::clamp(x, real(0), real(W - 1));
  y = std::clamp(y, real(0), real(H - 1));
  const int x0 = std::min(int(std::floor(x)), W >= 2 ? W - 2 : 0);
  const int y0 = std::min(int(std::floor(y)), H >= 2 ? H - 2 : 0);
  const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  const real fx = x - real(x0), fy = y - real(y0);
  for (int c = 0; c < buffer.channels; ++c) {
    out[size_t(c)] = (real(1) - fy) * ((real(1) - fx) * buffer.at(x0, y0, c) +
                                       fx * buffer.at(x1, y0, c)) +
                     fy * ((real(1) - fx) * buffer.at(x0, y1, c) + fx * buffer.at(x1, y1, c));
  }
}

real bilinear_sample(const ImageBuffer& buffer, real x, real y, int channel) {
  NPG_CHECK(channel >= 0 && channel < buffer.channels, "bilinear_sample: bad channel");
  const int W = buffer.width, H = buffer.height;
  x = std::clamp(x, real(0), real(W - 1));
  y = std::clamp(y, real(0), real(H - 1));
  const int x0 = std::min(int(std::floor(x)), W >= 2 ? W - 2 : 0);
  const int y0 = std::min(int(std::floor(y)), H >= 2 ? H - 2 : 0);
  const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  const real fx = x - real(x0), fy = y - real(y0);
  return (real(1) - fy) * ((real(1) - fx) * buffer.at(x0, y0, channel) +
                           fx * buffer.at(x1, y0, channel)) +
         fy * ((real(1) - fx) * buffer.at(x0, y1, channel) + fx * buffer.at(x1, y1, channel));
}

}  // namespace npg
