// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "npg/geometry.hpp"
#include "npg/tensor.hpp"

namespace npg {

// One oriented local volume: an anchor point, its k-1 reference-frame nearest
// neighbors, and the fixed orientation triangle (anchor + its 2 closest
// neighbors, repaired if degenerate). Topology never changes over time.
struct LocalVolume {
  int anchor = 0;
  std::vector<int> neighbors;       // k-1 indices, nearest first
  std::array<int, 3> triangle{0, 0, 0};
};

struct VolumeSet {
  int k = 0;
  std::vector<LocalVolume> volumes;  // volumes[i].anchor == i
  // Flattened M x k member table; row i = [i, neighbors of i...]. This is the
  // gather/blend index layout used by the Gaussian position interpolation.
  std::vector<int> member_indices;

  int count() const { return int(volumes.size()); }
  std::span<const int> members(int i) const {
    return std::span<const int>(member_indices).subspan(size_t(i) * size_t(k), size_t(k));
  }
};

// kNN on the reference frame; one volume per point. Throws when fewer than k
// distinct points exist. Degenerate orientation triangles are repaired by
// substituting the next-nearest neighbor.
VolumeSet build_volumes(std::span<const Vec3> reference_points, int k = 20);

// Area guard shared by construction and per-frame evaluation: a triangle is
// degenerate when its area is not above 1e-10 * scale^2 (scale = reference
// bounding-box diagonal).
bool triangle_degenerate(const Vec3& p1, const Vec3& p2, const Vec3& p3, real scale);

// Orthonormal det +1 frame of one triangle, assembled column-wise:
//   column 1: normalized cross of the unit edge directions (p2-p1), (p3-p1)
//   column 2: normalized (centroid - p1)
//   column 3: column1 x column2
// Throws on a degenerate triangle.
Mat3 volume_frame(const Vec3& p1, const Vec3& p2, const Vec3& p3);

// Softmax-barycentric position: softmax(weights) dot volume points.
Vec3 gaussian_world_position(std::span<const Vec3> volume_points, std::span<const real> weights);

// World rotation of a Gaussian: frame * local rotation.
Mat3 gaussian_world_rotation(const Mat3& frame, const Mat3& local_rotation);

// ---- Tape path -------------------------------------------------------------

// Columns of every volume frame at one time step as three (M,3) tensors,
// recorded on the active tape. Degenerate triangles at this time step reuse
// the last valid frame from `cache` (their gradient flow is cut); degeneracy
// with no cached frame yet is an error.
struct VolumeFrameAxes {
  Tensor a1, a2, a3;
};

struct VolumeFrameCache {
  std::vector<real> a1, a2, a3;  // M*3 values of the last valid frames
  std::vector<char> valid;
  int degenerate_events = 0;
};

VolumeFrameAxes volume_frame_axes(const Tensor& points, const VolumeSet& volumes,
                                  real reference_scale, VolumeFrameCache* cache);

}  // namespace npg
