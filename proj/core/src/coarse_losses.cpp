// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/coarse_losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "npg/ops.hpp"

namespace npg {

NeighborGraph NeighborGraph::build(std::span<const Vec3> reference_points, real radius_fraction,
                                   int min_neighbors) {
  const int M = int(reference_points.size());
  NPG_CHECK(M > min_neighbors, "neighbor graph needs more than " << min_neighbors << " points");
  const real diag = bounding_box_diagonal(reference_points);
  const real radius2 = radius_fraction * radius_fraction * diag * diag;

  NeighborGraph graph;
  graph.neighbors.resize(size_t(M));
  std::vector<std::pair<real, int>> dist;
  dist.reserve(size_t(M));
  for (int i = 0; i < M; ++i) {
    dist.clear();
    for (int j = 0; j < M; ++j) {
      if (j == i) continue;
      dist.push_back({(reference_points[size_t(j)] - reference_points[size_t(i)]).squaredNorm(), j});
    }
    std::sort(dist.begin(), dist.end());
    auto& nbrs = graph.neighbors[size_t(i)];
    for (const auto& [d2, j] : dist) {
      if (d2 <= radius2 || int(nbrs.size()) < min_neighbors)
        nbrs.push_back(j);
      else
        break;
    }
    for (int j : nbrs) {
      graph.pair_i.push_back(i);
      graph.pair_j.push_back(j);
    }
  }
  return graph;
}

namespace {

// Camera-space coordinates of the model points as a tape tensor.
Tensor to_camera_space(const Tensor& points, const Camera& cam) {
  Tensor rot_t({3, 3});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot_t.at(3 * r + c) = cam.rotation(c, r);  // R^T
  Tensor trans({1, 3}, {cam.translation.x(), cam.translation.y(), cam.translation.z()});
  return add(matmul(points, rot_t), trans);
}

}  // namespace

std::vector<Vec2> sample_mask_points(const ImageBuffer& mask, int n_samples, Rng& rng) {
  NPG_CHECK(mask.channels == 1, "sample_mask_points: mask must be single channel");
  NPG_CHECK(n_samples > 0, "sample_mask_points: n_samples must be positive");
  std::vector<int> foreground;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y, 0) > real(0.5)) foreground.push_back(y * mask.width + x);
  if (foreground.empty()) return {};

  // Normalized coordinates: pixel centers map into (0,1).
  const real inv_w = real(1) / real(mask.width);
  const real inv_h = real(1) / real(mask.height);
  std::vector<Vec2> samples;
  samples.reserve(size_t(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    const int pix = foreground[size_t(rng.index(int64_t(foreground.size())))];
    samples.emplace_back((real(pix % mask.width) + real(0.5)) * inv_w,
                         (real(pix / mask.width) + real(0.5)) * inv_h);
  }
  return samples;
}

std::optional<Tensor> mask_chamfer_loss(const Tensor& points, const Camera& camera,
                                        const ImageBuffer& mask, int n_samples, Rng& rng) {
  NPG_CHECK(mask.width == camera.width && mask.height == camera.height,
            "mask_chamfer_loss: mask does not match the camera image size");
  const std::vector<Vec2> samples = sample_mask_points(mask, n_samples, rng);
  if (samples.empty()) return std::nullopt;
  return mask_chamfer_loss(points, camera, samples);
}

std::optional<Tensor> mask_chamfer_loss(const Tensor& points, const Camera& camera,
                                        std::span<const Vec2> samples) {
  NPG_CHECK(points.rank() == 2 && points.dim(1) == 3, "mask_chamfer_loss: points must be (M,3)");
  if (samples.empty()) return std::nullopt;
  const int n_samples = int(samples.size());
  const real inv_w = real(1) / real(camera.width);
  const real inv_h = real(1) / real(camera.height);
  std::vector<real> sample_data;
  sample_data.reserve(size_t(n_samples) * 2);
  for (const Vec2& s : samples) {
    sample_data.push_back(s.x());
    sample_data.push_back(s.y());
  }
  Tensor sample_tensor({n_samples, 2}, std::move(sample_data));

  Tensor cam_space = to_camera_space(points, camera);
  std::vector<int> visible;
  {
    auto v = cam_space.values();
    for (int i = 0; i < points.dim(0); ++i)
      if (v[size_t(3 * i + 2)] > real(1e-8)) visible.push_back(i);
  }
  if (visible.empty()) return std::nullopt;

  Tensor pc = gather_rows(cam_space, visible);
  Tensor z = slice_cols(pc, 2, 3);
  Tensor u = add_const(scale(div(slice_cols(pc, 0, 1), z), camera.fx), camera.cx);
  Tensor v = add_const(scale(div(slice_cols(pc, 1, 2), z), camera.fy), camera.cy);
  Tensor uv = concat_cols({scale(add_const(u, real(0.5)), inv_w), scale(add_const(v, real(0.5)), inv_h)});

  // Nearest-neighbor matching on values; differentiation flows through the
  // matched pairs only (the matching itself is piecewise constant).
  const int np = int(visible.size());
  auto uvv = uv.values();
  auto sv = sample_tensor.values();
  std::vector<int> nearest_sample(static_cast<size_t>(np));
  for (int i = 0; i < np; ++i) {
    real best = std::numeric_limits<real>::infinity();
    int arg = 0;
    for (int s = 0; s < n_samples; ++s) {
      const real dx = uvv[size_t(2 * i)] - sv[size_t(2 * s)];
      const real dy = uvv[size_t(2 * i + 1)] - sv[size_t(2 * s + 1)];
      const real d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        arg = s;
      }
    }
    nearest_sample[size_t(i)] = arg;
  }
  std::vector<int> nearest_point(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    real best = std::numeric_limits<real>::infinity();
    int arg = 0;
    for (int i = 0; i < np; ++i) {
      const real dx = uvv[size_t(2 * i)] - sv[size_t(2 * s)];
      const real dy = uvv[size_t(2 * i + 1)] - sv[size_t(2 * s + 1)];
      const real d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        arg = i;
      }
    }
    nearest_point[size_t(s)] = arg;
  }

  Tensor d_points = sub(uv, gather_rows(sample_tensor, nearest_sample));
  Tensor d_samples = sub(gather_rows(uv, nearest_point), sample_tensor);
  return add(mean(row_sum(mul(d_points, d_points))), mean(row_sum(mul(d_samples, d_samples))));
}

Tensor rigidity_loss(const Tensor& points_t, const Tensor& points_ref, const NeighborGraph& graph) {
  NPG_CHECK(points_t.shape() == points_ref.shape(), "rigidity_loss: frame shapes differ");
  auto pair_distances = [&graph](const Tensor& pts) {
    Tensor diff = sub(gather_rows(pts, graph.pair_i), gather_rows(pts, graph.pair_j));
    return sqrt_guarded(row_sum(mul(diff, diff)));
  };
  Tensor residual = sub(pair_distances(points_ref), pair_distances(points_t));
  return sum(mul(residual, residual));
}

std::optional<Tensor> flow_consistency_loss(const Tensor& points_t, const Tensor& points_t1,
                                            const Tensor& descriptors,
                                            const ImageBuffer& backward_flow,
                                            const ImageBuffer& mask_t, const Camera& camera_t,
                                            const Camera& camera_t1, real huber_eps,
                                            const PointSplatConfig& splat) {
  const int W = camera_t.width, H = camera_t.height;
  NPG_CHECK(backward_flow.channels == 2 && backward_flow.width == W && backward_flow.height == H,
            "flow_consistency_loss: flow buffer must be 2-channel at the frame-t size");
  NPG_CHECK(mask_t.channels == 1 && mask_t.width == W && mask_t.height == H,
            "flow_consistency_loss: mask must be 1-channel at the frame-t size");
  const int D = descriptors.dim(1);

  DescriptorRender rt = render_descriptors(points_t, descriptors, camera_t, splat);
  DescriptorRender rt1 = render_descriptors(points_t1, descriptors, camera_t1, splat);
  if (rt.visible_points == 0 && rt1.visible_points == 0) return std::nullopt;

  constexpr real kCoverageEps = real(1e-6);
  Tensor img_t = div(rt.image, add_const(rt.coverage, kCoverageEps));
  Tensor img_t1 = div(rt1.image, add_const(rt1.coverage, kCoverageEps));

  // Warp the frame-(t+1) rendering onto the frame-t grid.
  std::vector<real> locs(size_t(H) * size_t(W) * 2);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const size_t i = size_t(int64_t(y) * W + x);
      locs[2 * i] = real(x) + backward_flow.at(x, y, 0);
      locs[2 * i + 1] = real(y) + backward_flow.at(x, y, 1);
    }
  Tensor warped = reshape(bilinear_sample(img_t1, Tensor({H * W, 2}, std::move(locs))), {H, W, D});

  Tensor mask({H, W, 1});
  std::copy(mask_t.data.begin(), mask_t.data.end(), mask.values().begin());

  Tensor masked = mul(sub(img_t, warped), mask);
  return sum(huber(masked, huber_eps));
}

}  // namespace npg
