// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "npg/geometry.hpp"
#include "npg/point_renderer.hpp"
#include "npg/tensor.hpp"

namespace npg {

// Fixed neighbor topology for the rigidity loss: built once on the reference
// frame under a radius criterion and frozen. The radius is a fraction of the
// reference bounding-box diagonal, enlarged per point until each has at least
// `min_neighbors`.
struct NeighborGraph {
  std::vector<std::vector<int>> neighbors;
  std::vector<int> pair_i, pair_j;  // flattened ordered (i, j in N(i)) pairs

  int64_t pair_count() const { return int64_t(pair_i.size()); }

  static NeighborGraph build(std::span<const Vec3> reference_points,
                             real radius_fraction = real(0.05), int min_neighbors = 4);
};

struct LossWeights {
  real mask = 1;
  real flow = 10;
  real rigidity = 1;
  real huber_eps = real(0.01);
};

// Uniform draws (with replacement) of foreground pixel centers in normalized
// [0,1]^2 coordinates; empty when the mask has no foreground.
std::vector<Vec2> sample_mask_points(const ImageBuffer& mask, int n_samples, Rng& rng);

// Symmetric squared Chamfer distance in normalized [0,1]^2 image coordinates
// between `n_samples` uniform draws from the mask foreground and the projected
// point model. Points behind the camera are excluded. Returns nothing when the
// mask has no foreground or no point projects in front of the camera (the
// frame is skipped).
std::optional<Tensor> mask_chamfer_loss(const Tensor& points, const Camera& camera,
                                        const ImageBuffer& mask, int n_samples, Rng& rng);

// Same loss against an explicit sample set.
std::optional<Tensor> mask_chamfer_loss(const Tensor& points, const Camera& camera,
                                        std::span<const Vec2> samples);

// sum_i sum_{j in N(i)} (||P_i^r - P_j^r|| - ||P_i^t - P_j^t||)^2.
Tensor rigidity_loss(const Tensor& points_t, const Tensor& points_ref, const NeighborGraph& graph);

// Huber flow-consistency loss between the frame-t descriptor rendering and the
// flow-warped frame-(t+1) rendering, masked by the frame-t mask. The backward
// flow is defined on the frame-t pixel grid: warped(x) = bilinear(render_t1,
// x + flow(x)).
std::optional<Tensor> flow_consistency_loss(const Tensor& points_t, const Tensor& points_t1,
                                            const Tensor& descriptors,
                                            const ImageBuffer& backward_flow,
                                            const ImageBuffer& mask_t, const Camera& camera_t,
                                            const Camera& camera_t1, real huber_eps = real(0.01),
                                            const PointSplatConfig& splat = {});

}  // namespace npg
