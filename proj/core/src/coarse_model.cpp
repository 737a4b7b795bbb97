// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/coarse_model.hpp"

#include <cmath>

#include "npg/ops.hpp"

namespace npg {

Tensor CoefficientNetwork::forward(const Tensor& encoding) const {
  NPG_CHECK(encoding.rank() == 2 && encoding.dim(0) == 1 && encoding.dim(1) == input_dim,
            "coefficient network expects a (1," << input_dim << ") encoding, got "
                                                << shape_str(encoding.shape()));
  Tensor h = encoding;
  for (int layer = 0; layer < kLayers; ++layer) {
    h = add(matmul(h, weights[size_t(2 * layer)]), weights[size_t(2 * layer + 1)]);
    if (layer + 1 < kLayers) h = leaky_relu(h);
  }
  return h;
}

std::vector<Tensor> CoarseModel::trainable_parameters() {
  std::vector<Tensor> params;
  params.push_back(basis.elements);
  for (Tensor& w : net.weights) params.push_back(w);
  return params;
}

Tensor encode_time(int frame, int frame_count) {
  NPG_CHECK(frame_count >= 2, "time encoding needs at least 2 frames");
  NPG_CHECK(frame >= 0 && frame < frame_count,
            "frame " << frame << " outside [0," << frame_count << ")");
  const real s = real(frame) / real(frame_count - 1);
  Tensor enc({1, kTimeEncodingDim});
  auto v = enc.values();
  v[0] = s;
  for (int j = 0; j < 6; ++j) {
    const real arg = std::pow(real(2), j) * real(M_PI) * s;
    v[size_t(1 + 2 * j)] = std::sin(arg);
    v[size_t(2 + 2 * j)] = std::cos(arg);
  }
  return enc;
}

Tensor predict_coefficients(const CoefficientNetwork& net, int frame, int frame_count) {
  return net.forward(encode_time(frame, frame_count));
}

Tensor assemble_points(const DeformationBasis& basis, const Tensor& coefficients) {
  NPG_CHECK(coefficients.numel() == basis.K,
            "assemble_points: " << coefficients.numel() << " coefficients for K=" << basis.K);
  Tensor alpha = coefficients.rank() == 2 ? coefficients : reshape(coefficients, {1, basis.K});
  return reshape(matmul(alpha, basis.elements), {basis.M, 3});
}

Tensor assemble_frame(const CoarseModel& model, int frame) {
  return assemble_points(model.basis, predict_coefficients(model.net, frame, model.frame_count));
}

std::vector<Trajectory> point_trajectories(const CoarseModel& model) {
  const int M = model.point_count();
  std::vector<Trajectory> out(size_t(M), Trajectory(size_t(model.frame_count)));
  for (int t = 0; t < model.frame_count; ++t) {
    Tensor points = assemble_frame(model, t);
    auto v = points.values();
    for (int i = 0; i < M; ++i)
      out[size_t(i)][size_t(t)] = Vec3(v[size_t(3 * i)], v[size_t(3 * i + 1)], v[size_t(3 * i + 2)]);
  }
  return out;
}

CoarseModel init_model(int point_count, int basis_size, int frame_count, uint64_t seed,
                       int hidden_dim, int descriptor_dim) {
  NPG_CHECK(point_count > 0 && basis_size > 0 && frame_count >= 2, "init_model: bad sizes");
  Rng rng(seed);

  CoarseModel model;
  model.seed = seed;
  model.frame_count = frame_count;

  model.basis.K = basis_size;
  model.basis.M = point_count;
  model.basis.elements = Tensor({basis_size, 3 * point_count});
  for (auto& v : model.basis.elements.values()) v = rng.normal();

  CoefficientNetwork& net = model.net;
  net.input_dim = kTimeEncodingDim;
  net.hidden_dim = hidden_dim;
  net.output_dim = basis_size;
  for (int layer = 0; layer < CoefficientNetwork::kLayers; ++layer) {
    const int in = layer == 0 ? net.input_dim : hidden_dim;
    const int out = layer + 1 == CoefficientNetwork::kLayers ? basis_size : hidden_dim;
    Tensor W({in, out});
    const real std = std::sqrt(real(2) / real(in));
    for (auto& v : W.values()) v = rng.normal(0, std);
    net.weights.push_back(W);
    net.weights.push_back(Tensor({out}));
  }

  // Rescale the basis so the assembled first frame sits inside a unit cube;
  // the basis is zero-mean so the cloud is already centered near the origin.
  Tensor first = assemble_frame(model, 0);
  auto v = first.values();
  Vec3 centroid = Vec3::Zero();
  for (int i = 0; i < point_count; ++i)
    centroid += Vec3(v[size_t(3 * i)], v[size_t(3 * i + 1)], v[size_t(3 * i + 2)]);
  centroid /= real(point_count);
  real extent = 0;
  for (int i = 0; i < point_count; ++i) {
    const Vec3 p(v[size_t(3 * i)], v[size_t(3 * i + 1)], v[size_t(3 * i + 2)]);
    extent = std::max(extent, (p - centroid).cwiseAbs().maxCoeff());
  }
  const real scale = extent > real(1e-9) ? real(0.5) / extent : real(1);
  for (auto& b : model.basis.elements.values()) b *= scale;

  model.colors = Tensor::full({point_count, 3}, real(0.5));
  model.descriptors = Tensor({point_count, descriptor_dim});
  for (auto& d : model.descriptors.values()) d = rng.uniform();

  for (Tensor& p : model.trainable_parameters()) p.set_requires_grad(true);
  return model;
}

}  // namespace npg
