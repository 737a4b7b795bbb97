// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/point_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npg/op_node.hpp"
#include "npg/ops.hpp"

namespace npg {

namespace {

struct SplatPoint {
  real u = 0, v = 0, z = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // footprint pixel bounds, inclusive
  bool visible = false;
};

SplatPoint project_splat(const Camera& cam, const Vec3& world, const PointSplatConfig& cfg) {
  SplatPoint s;
  const Vec3 pc = cam.to_camera(world);
  if (pc.z() <= real(1e-8)) return s;
  s.z = pc.z();
  s.u = cam.fx * pc.x() / pc.z() + cam.cx;
  s.v = cam.fy * pc.y() / pc.z() + cam.cy;
  const real r = cfg.cutoff_sigma * cfg.sigma_px;
  s.x0 = std::max(0, int(std::ceil(s.u - r)));
  s.x1 = std::min(cam.width - 1, int(std::floor(s.u + r)));
  s.y0 = std::max(0, int(std::ceil(s.v - r)));
  s.y1 = std::min(cam.height - 1, int(std::floor(s.v + r)));
  s.visible = s.x0 <= s.x1 && s.y0 <= s.y1;
  return s;
}

}  // namespace

DescriptorRender render_descriptors(const Tensor& points, const Tensor& descriptors,
                                    const Camera& camera, const PointSplatConfig& config,
                                    bool descriptors_differentiable) {
  NPG_CHECK(points.rank() == 2 && points.dim(1) == 3, "render_descriptors: points must be (M,3)");
  NPG_CHECK(descriptors.rank() == 2 && descriptors.dim(0) == points.dim(0),
            "render_descriptors: descriptor row count must match points");
  const int M = points.dim(0);
  const int D = descriptors.dim(1);
  const int W = camera.width, H = camera.height;
  const real sigma2 = config.sigma_px * config.sigma_px;
  const real cutoff2 = config.cutoff_sigma * config.cutoff_sigma * sigma2;

  auto pv = points.values();
  auto dv = descriptors.values();

  auto splats = std::make_shared<std::vector<SplatPoint>>(size_t(M));
  std::vector<int> order;
  order.reserve(size_t(M));
  for (int i = 0; i < M; ++i) {
    const Vec3 p(pv[size_t(3 * i)], pv[size_t(3 * i + 1)], pv[size_t(3 * i + 2)]);
    (*splats)[size_t(i)] = project_splat(camera, p, config);
    if ((*splats)[size_t(i)].visible) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const real za = (*splats)[size_t(a)].z, zb = (*splats)[size_t(b)].z;
    return za < zb || (za == zb && a < b);
  });

  Tensor out({H, W, D + 1});
  auto ov = out.values();
  auto transmittance = std::make_shared<std::vector<real>>(size_t(H) * size_t(W), real(1));
  std::vector<real>& T = *transmittance;

  for (int idx : order) {
    const SplatPoint& s = (*splats)[size_t(idx)];
    for (int y = s.y0; y <= s.y1; ++y)
      for (int x = s.x0; x <= s.x1; ++x) {
        const real dx = real(x) - s.u, dy = real(y) - s.v;
        const real r2 = dx * dx + dy * dy;
        if (r2 > cutoff2) continue;
        const size_t pix = size_t(int64_t(y) * W + x);
        const real alpha = std::min(std::exp(-r2 / (2 * sigma2)), config.alpha_cap);
        const real w = alpha * T[pix];
        real* po = &ov[pix * size_t(D + 1)];
        for (int c = 0; c < D; ++c) po[c] += w * dv[size_t(int64_t(idx) * D + c)];
        po[D] += w;
        T[pix] *= real(1) - alpha;
      }
  }

  const bool diff_points = points.requires_grad();
  const bool diff_desc = descriptors_differentiable && descriptors.requires_grad();
  if (Tape::active() != nullptr && (diff_points || diff_desc)) {
    out.set_requires_grad(true);
    auto pi = points.impl();
    auto di = descriptors.impl();
    const Camera cam = camera;
    const PointSplatConfig cfg = config;
    auto sorted = std::make_shared<std::vector<int>>(order);
    record_op("point_splat", out, [pi, di, splats, sorted, transmittance, cam, cfg, M, D, W, H,
                                   sigma2, cutoff2, diff_points,
                                   diff_desc](const detail::TensorImpl& o) {
      if (diff_points) pi->ensure_grad();
      if (diff_desc) di->ensure_grad();

      // Per-pixel replay state: transmittance in front of the current point
      // (walked back-to-front), and the composite accumulated behind it,
      // renormalized as in the standard splatting backward recurrences.
      std::vector<real> Tcur = *transmittance;  // starts at final transmittance
      std::vector<real> accum(size_t(H) * size_t(W) * size_t(D), 0);
      std::vector<real> last_alpha(size_t(H) * size_t(W), 0);
      std::vector<real> last_desc(size_t(H) * size_t(W) * size_t(D), 0);

      for (auto it = sorted->rbegin(); it != sorted->rend(); ++it) {
        const int idx = *it;
        const SplatPoint& s = (*splats)[size_t(idx)];
        real du = 0, dv_ = 0;
        for (int y = s.y0; y <= s.y1; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const real dx = real(x) - s.u, dy = real(y) - s.v;
            const real r2 = dx * dx + dy * dy;
            if (r2 > cutoff2) continue;
            const size_t pix = size_t(int64_t(y) * W + x);
            const real raw = std::exp(-r2 / (2 * sigma2));
            const real alpha = std::min(raw, cfg.alpha_cap);
            // Transmittance in front of this point.
            const real Tbefore = Tcur[pix] / (real(1) - alpha);
            Tcur[pix] = Tbefore;
            const real* g = &o.grad[pix * size_t(D + 1)];
            real dalpha = 0;
            real* acc = &accum[pix * size_t(D)];
            real* last = &last_desc[pix * size_t(D)];
            const real la = last_alpha[pix];
            for (int c = 0; c < D; ++c) {
              const real dc = di->values[size_t(int64_t(idx) * D + c)];
              acc[c] = la * last[c] + (real(1) - la) * acc[c];
              last[c] = dc;
              dalpha += (dc - acc[c]) * g[c];
              if (diff_desc) di->grad[size_t(int64_t(idx) * D + c)] += alpha * Tbefore * g[c];
            }
            dalpha *= Tbefore;
            // Alpha output channel: d(1 - prod(1-a_j))/da_i = T_final/(1-a_i).
            dalpha += g[D] * (*transmittance)[pix] / (real(1) - alpha);
            last_alpha[pix] = alpha;

            if (diff_points && raw < cfg.alpha_cap) {
              const real dadu = alpha * dx / sigma2;
              const real dadv = alpha * dy / sigma2;
              du += dalpha * dadu;
              dv_ += dalpha * dadv;
            }
          }
        if (diff_points && (du != 0 || dv_ != 0)) {
          // Chain through the pinhole projection.
          const Vec3 p(pi->values[size_t(3 * idx)], pi->values[size_t(3 * idx + 1)],
                       pi->values[size_t(3 * idx + 2)]);
          const Vec3 pc = cam.to_camera(p);
          const real invz = real(1) / pc.z();
          Vec3 dpc(cam.fx * invz * du, cam.fy * invz * dv_,
                   -(cam.fx * pc.x() * du + cam.fy * pc.y() * dv_) * invz * invz);
          const Vec3 dpw = cam.rotation.transpose() * dpc;
          pi->grad[size_t(3 * idx)] += dpw.x();
          pi->grad[size_t(3 * idx + 1)] += dpw.y();
          pi->grad[size_t(3 * idx + 2)] += dpw.z();
        }
      }
    });
  }

  DescriptorRender result;
  result.combined = out;
  result.image = slice_channels(out, 0, D);
  result.coverage = slice_channels(out, D, D + 1);
  result.visible_points = int(order.size());
  return result;
}

}  // namespace npg
