// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "npg/geometry.hpp"
#include "npg/tensor.hpp"

namespace npg {

// K learnable basis elements, each an M x 3 point set, stored as one (K, 3M)
// tensor so per-frame assembly is a single matmul.
struct DeformationBasis {
  int K = 0;
  int M = 0;
  Tensor elements;  // (K, 3M), row k = flattened M x 3 element

  Vec3 point(int k, int i) const {
    const auto v = elements.values();
    const size_t base = size_t(k) * size_t(3 * M) + size_t(3 * i);
    return Vec3(v[base], v[base + 1], v[base + 2]);
  }
};

// Maps the temporal encoding to K basis coefficients. Six fully connected
// layers, leaky-relu between them, linear output.
struct CoefficientNetwork {
  static constexpr int kLayers = 6;
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
  std::vector<Tensor> weights;  // W0,b0,...,W5,b5; Wi is (in,out), bi is (out)

  // (1, input_dim) -> (1, output_dim); records on the active tape.
  Tensor forward(const Tensor& encoding) const;
};

struct CoarseModel {
  DeformationBasis basis;
  CoefficientNetwork net;
  Tensor colors;       // (M, 3) in [0,1]
  Tensor descriptors;  // (M, d_e), fixed identification features, never optimized
  int frame_count = 0;
  uint64_t seed = 0;

  int point_count() const { return basis.M; }
  int basis_size() const { return basis.K; }

  std::vector<Tensor> trainable_parameters();  // basis + network weights
};

// Fourier time encoding: s = t/(N-1) for the 0-based frame index t, output
// [s, sin(2^j pi s), cos(2^j pi s)] for j = 0..5, so the width is 13.
// Frame counts below 2 are rejected.
constexpr int kTimeEncodingDim = 13;
Tensor encode_time(int frame, int frame_count);

// Runs the coefficient network on the encoded frame time.
Tensor predict_coefficients(const CoefficientNetwork& net, int frame, int frame_count);

// P^t = sum_k alpha_k B_k as a (M,3) tensor; differentiable in both inputs.
Tensor assemble_points(const DeformationBasis& basis, const Tensor& coefficients);

// Convenience: predict + assemble for one frame.
Tensor assemble_frame(const CoarseModel& model, int frame);

// Ordered world-space positions of point i over all frames.
using Trajectory = std::vector<Vec3>;
std::vector<Trajectory> point_trajectories(const CoarseModel& model);

// Random init: basis ~ N(0,1) rescaled so the assembled first frame fits in a
// unit cube, Kaiming-style network weights, mid-gray colors, uniform
// descriptors. Bitwise reproducible for a fixed seed.
CoarseModel init_model(int point_count, int basis_size, int frame_count, uint64_t seed,
                       int hidden_dim = 256, int descriptor_dim = 16);

}  // namespace npg
