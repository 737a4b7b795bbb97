// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <vector>

#include "npg/common.hpp"

namespace npg {

using Vec2 = Eigen::Matrix<real, 2, 1>;
using Vec3 = Eigen::Matrix<real, 3, 1>;
using Vec4 = Eigen::Matrix<real, 4, 1>;
using Mat3 = Eigen::Matrix<real, 3, 3>;
using Mat4 = Eigen::Matrix<real, 4, 4>;

// Pinhole camera, OpenCV convention: world-to-camera transform, +Z forward,
// +X right, +Y down, pixel (0,0) at the top-left pixel center.
struct Camera {
  Mat3 rotation = Mat3::Identity();  // world-to-camera
  Vec3 translation = Vec3::Zero();
  real fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  // Throws unless the rotation is orthonormal with det +1 (tol 1e-8) and the
  // focal lengths are positive.
  void validate() const;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  Mat4 world_to_camera_matrix() const;
};

struct PixelProjection {
  real u = 0, v = 0;
  real depth = 0;
  bool visible = false;
};

// Standard pinhole projection; points with camera-space depth <= 1e-8 are
// flagged invisible instead of projected.
PixelProjection project(const Camera& camera, const Vec3& point);
std::vector<PixelProjection> project(const Camera& camera, std::span<const Vec3> points);

// Unit-quaternion rotation parameter, stored (w,x,y,z).
struct RotationParam {
  real w = 1, x = 0, y = 0, z = 0;

  // Normalizes and converts; throws on the zero quaternion.
  Mat3 to_matrix() const;
  static RotationParam from_matrix(const Mat3& m);
  RotationParam normalized() const;
};

// Row-major H x W x C sample grid. Colors live in [0,1], masks in {0,1},
// flow fields are unbounded pixel displacements.
struct ImageBuffer {
  int width = 0, height = 0, channels = 0;
  std::vector<real> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, real fill = 0)
      : width(w), height(h), channels(c), data(size_t(w) * size_t(h) * size_t(c), fill) {}

  real& at(int x, int y, int c) {
    return data[size_t((int64_t(y) * width + x) * channels + c)];
  }
  real at(int x, int y, int c) const {
    return data[size_t((int64_t(y) * width + x) * channels + c)];
  }
  int64_t sample_count() const { return int64_t(data.size()); }
};

// Diagonal length of the axis-aligned bounding box of a point set.
real bounding_box_diagonal(std::span<const Vec3> points);

// Bilinear interpolation with border clamping; writes `channels` values.
void bilinear_sample(const ImageBuffer& buffer, real x, real y, std::span<real> out);
real bilinear_sample(const ImageBuffer& buffer, real x, real y, int channel);

}  // namespace npg
