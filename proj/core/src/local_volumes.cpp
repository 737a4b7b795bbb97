// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/local_volumes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npg/ops.hpp"

namespace npg {

bool triangle_degenerate(const Vec3& p1, const Vec3& p2, const Vec3& p3, real scale) {
  const real area = real(0.5) * (p2 - p1).cross(p3 - p1).norm();
  return !(area > real(1e-10) * scale * scale);
}

VolumeSet build_volumes(std::span<const Vec3> reference_points, int k) {
  const int M = int(reference_points.size());
  NPG_CHECK(k >= 3, "build_volumes: k must be at least 3");
  NPG_CHECK(M >= k, "build_volumes: need at least k=" << k << " points, got " << M);

  const real scale = bounding_box_diagonal(reference_points);

  VolumeSet set;
  set.k = k;
  set.volumes.resize(size_t(M));
  set.member_indices.resize(size_t(M) * size_t(k));

  std::vector<std::pair<real, int>> dist(static_cast<size_t>(M));
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j)
      dist[size_t(j)] = {(reference_points[size_t(j)] - reference_points[size_t(i)]).squaredNorm(), j};
    dist[size_t(i)].first = std::numeric_limits<real>::infinity();  // exclude self
    std::sort(dist.begin(), dist.end());
    NPG_CHECK(dist[size_t(k - 2)].first > real(0),
              "build_volumes: point " << i << " has fewer than k distinct points nearby");

    LocalVolume& vol = set.volumes[size_t(i)];
    vol.anchor = i;
    vol.neighbors.resize(size_t(k - 1));
    for (int j = 0; j < k - 1; ++j) vol.neighbors[size_t(j)] = dist[size_t(j)].second;

    // Orientation triangle: anchor + 2 closest; walk further out while flat.
    vol.triangle = {i, vol.neighbors[0], vol.neighbors[1]};
    int probe = 2;
    while (triangle_degenerate(reference_points[size_t(vol.triangle[0])],
                               reference_points[size_t(vol.triangle[1])],
                               reference_points[size_t(vol.triangle[2])], scale) &&
           probe < M - 1) {
      vol.triangle[2] = dist[size_t(probe)].second;
      ++probe;
    }
    NPG_CHECK(!triangle_degenerate(reference_points[size_t(vol.triangle[0])],
                                   reference_points[size_t(vol.triangle[1])],
                                   reference_points[size_t(vol.triangle[2])], scale),
              "build_volumes: no non-degenerate triangle around point " << i);

    set.member_indices[size_t(i) * size_t(k)] = i;
    for (int j = 0; j < k - 1; ++j)
      set.member_indices[size_t(i) * size_t(k) + size_t(j + 1)] = vol.neighbors[size_t(j)];
  }
  return set;
}

Mat3 volume_frame(const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  const Vec3 e1 = (p2 - p1).normalized();
  const Vec3 e2 = (p3 - p1).normalized();
  const Vec3 cross = e1.cross(e2);
  NPG_CHECK(cross.norm() > real(1e-12), "volume_frame: degenerate triangle");
  const Vec3 a1 = cross.normalized();
  const Vec3 centroid = (p1 + p2 + p3) / real(3);
  NPG_CHECK((centroid - p1).norm() > real(1e-12), "volume_frame: centroid coincides with p1");
  const Vec3 a2 = (centroid - p1).normalized();
  const Vec3 a3 = a1.cross(a2);
  Mat3 frame;
  frame.col(0) = a1;
  frame.col(1) = a2;
  frame.col(2) = a3;
  return frame;
}

Vec3 gaussian_world_position(std::span<const Vec3> volume_points, std::span<const real> weights) {
  NPG_CHECK(volume_points.size() == weights.size(),
            "gaussian_world_position: " << weights.size() << " weights for "
                                        << volume_points.size() << " points");
  real mx = weights[0];
  for (real w : weights) mx = std::max(mx, w);
  real denom = 0;
  Vec3 out = Vec3::Zero();
  for (size_t j = 0; j < weights.size(); ++j) {
    const real e = std::exp(weights[j] - mx);
    denom += e;
    out += e * volume_points[j];
  }
  return out / denom;
}

Mat3 gaussian_world_rotation(const Mat3& frame, const Mat3& local_rotation) {
  return frame * local_rotation;
}

VolumeFrameAxes volume_frame_axes(const Tensor& points, const VolumeSet& volumes,
                                  real reference_scale, VolumeFrameCache* cache) {
  const int M = volumes.count();
  NPG_CHECK(points.rank() == 2 && points.dim(1) == 3 && points.dim(0) >= M,
            "volume_frame_axes: points must be (M,3)");

  std::vector<int> t1(static_cast<size_t>(M)), t2(static_cast<size_t>(M)), t3(static_cast<size_t>(M));
  for (int i = 0; i < M; ++i) {
    t1[size_t(i)] = volumes.volumes[size_t(i)].triangle[0];
    t2[size_t(i)] = volumes.volumes[size_t(i)].triangle[1];
    t3[size_t(i)] = volumes.volumes[size_t(i)].triangle[2];
  }

  // Detect triangles that collapsed at this time step (values only).
  auto pv = points.values();
  auto point_at = [&](int i) {
    return Vec3(pv[size_t(3 * i)], pv[size_t(3 * i + 1)], pv[size_t(3 * i + 2)]);
  };
  std::vector<int> degenerate;
  for (int i = 0; i < M; ++i)
    if (triangle_degenerate(point_at(t1[size_t(i)]), point_at(t2[size_t(i)]), point_at(t3[size_t(i)]),
                            reference_scale))
      degenerate.push_back(i);

  Tensor p1 = gather_rows(points, t1);
  Tensor p2 = gather_rows(points, t2);
  Tensor p3 = gather_rows(points, t3);
  Tensor e1 = normalize_rows(sub(p2, p1));
  Tensor e2 = normalize_rows(sub(p3, p1));
  Tensor a1 = normalize_rows(cross_rows(e1, e2));
  Tensor mid = scale(add(add(p1, p2), p3), real(1) / real(3));
  Tensor a2 = normalize_rows(sub(mid, p1));
  Tensor a3 = cross_rows(a1, a2);

  if (!degenerate.empty()) {
    NPG_CHECK(cache != nullptr, "volume_frame_axes: degenerate triangle with no frame cache");
    std::vector<real> r1, r2, r3;
    for (int i : degenerate) {
      NPG_CHECK(!cache->valid.empty() && cache->valid[size_t(i)],
                "volume_frame_axes: triangle of volume " << i
                                                         << " degenerate with no previous frame");
      for (int c = 0; c < 3; ++c) {
        r1.push_back(cache->a1[size_t(3 * i + c)]);
        r2.push_back(cache->a2[size_t(3 * i + c)]);
        r3.push_back(cache->a3[size_t(3 * i + c)]);
      }
    }
    a1 = override_rows(a1, degenerate, r1);
    a2 = override_rows(a2, degenerate, r2);
    a3 = override_rows(a3, degenerate, r3);
    cache->degenerate_events += int(degenerate.size());
  }

  if (cache != nullptr) {
    if (cache->valid.empty()) {
      cache->valid.assign(size_t(M), 0);
      cache->a1.assign(size_t(M) * 3, 0);
      cache->a2.assign(size_t(M) * 3, 0);
      cache->a3.assign(size_t(M) * 3, 0);
    }
    std::vector<char> bad(size_t(M), 0);
    for (int i : degenerate) bad[size_t(i)] = 1;
    auto v1 = a1.values();
    auto v2 = a2.values();
    auto v3 = a3.values();
    for (int i = 0; i < M; ++i) {
      if (bad[size_t(i)]) continue;
      for (int c = 0; c < 3; ++c) {
        cache->a1[size_t(3 * i + c)] = v1[size_t(3 * i + c)];
        cache->a2[size_t(3 * i + c)] = v2[size_t(3 * i + c)];
        cache->a3[size_t(3 * i + c)] = v3[size_t(3 * i + c)];
      }
      cache->valid[size_t(i)] = 1;
    }
  }

  return {a1, a2, a3};
}

}  // namespace npg
