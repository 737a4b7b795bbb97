// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "npg/geometry.hpp"
#include "npg/tensor.hpp"

namespace npg {

struct PointSplatConfig {
  real sigma_px = real(1.5);   // isotropic footprint std-dev in pixels
  real cutoff_sigma = real(3); // footprint clipped beyond this many sigmas
  real alpha_cap = real(0.999);
};

struct DescriptorRender {
  Tensor image;     // {H, W, D} accumulated descriptor channels
  Tensor coverage;  // {H, W, 1} accumulated alpha
  Tensor combined;  // {H, W, D+1} raw node output (descriptors + alpha)
  int visible_points = 0;
};

// Splats every point as an isotropic Gaussian footprint and composites
// descriptors with depth-sorted alpha blending, nearest first. Registered as
// a single tape primitive; the adjoint reaches the point positions (through
// the pinhole projection) and, when requested, the descriptors. Depth affects
// only the compositing order, so it carries no gradient.
DescriptorRender render_descriptors(const Tensor& points, const Tensor& descriptors,
                                    const Camera& camera, const PointSplatConfig& config = {},
                                    bool descriptors_differentiable = false);

}  // namespace npg
