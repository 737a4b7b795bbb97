// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "npg/tensor.hpp"

namespace npg {

// Differentiable primitives over dense tensors. Every function computes its
// value eagerly and appends one node to the active tape when any operand
// requires gradients. Shape mismatches throw with the primitive named.
//
// Broadcast rules for binary elementwise ops, kept deliberately narrow:
//   * identical shapes
//   * either side a scalar
//   * (n,m) op (m) or (1,m)  -- row broadcast
//   * (n,m) op (n,1)         -- column broadcast
//   * (H,W,C) op (H,W,1)     -- channel broadcast

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& t);
Tensor scale(const Tensor& t, real c);
Tensor add_const(const Tensor& t, real c);

Tensor exp(const Tensor& t);
// Elementwise power with constant exponent. Guarded at 0 for p < 1.
Tensor powc(const Tensor& t, real p);
// sqrt with a dead-zone: values below 1e-24 produce value 0 and gradient 0,
// so coincident-point distances do not emit infinite gradients.
Tensor sqrt_guarded(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor leaky_relu(const Tensor& t, real slope = real(0.01));
// Elementwise Huber penalty: 0.5 x^2/eps for |x| <= eps, |x| - eps/2 beyond.
Tensor huber(const Tensor& t, real eps);

// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with max subtraction; rank-1 tensors are one row.
Tensor softmax(const Tensor& t);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
// (n,m) -> (n): sum over each row.
Tensor row_sum(const Tensor& t);

Tensor reshape(const Tensor& t, std::vector<int> shape);
// (n,m) -> (n, c1-c0)
Tensor slice_cols(const Tensor& t, int c0, int c1);
// {H,W,C} -> {H,W,c1-c0}
Tensor slice_channels(const Tensor& t, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Select rows of a rank-1/2 tensor; backward scatters.
Tensor gather_rows(const Tensor& t, const std::vector<int>& idx);
// Replace the given rows with constant values; their gradient flow is cut.
Tensor override_rows(const Tensor& t, const std::vector<int>& rows,
                     const std::vector<real>& replacement);

// Row-wise 3-vector helpers.
Tensor cross_rows(const Tensor& a, const Tensor& b);
// Rows with norm below 1e-12 map to zero with zero gradient.
Tensor normalize_rows(const Tensor& t);

// out[i] = sum_j w[i,j] * points[idx[i*k+j]]; idx has n*k entries into points'
// rows. Backward reaches both the weights and the points.
Tensor blend_rows(const Tensor& weights, const Tensor& points, const std::vector<int>& idx);

// Bilinear interpolation of {H,W,C} at n pixel locations (x,y); locations are
// clamped to the border. Differentiable in both the image and the locations.
Tensor bilinear_sample(const Tensor& image, const Tensor& locations);

// 2D correlation of each channel with a fixed kernel, valid region only:
// {H,W,C} -> {H-K+1, W-K+1, C}.
Tensor conv2d_valid(const Tensor& image, const std::vector<real>& kernel, int ksize);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace npg
