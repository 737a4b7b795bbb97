// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "npg/fdcheck.hpp"
#include "npg/ops.hpp"
#include "npg/point_renderer.hpp"

using namespace npg;

namespace {

Camera small_camera(int size, real f) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = real(size) / 2 - real(0.5);
  cam.width = cam.height = size;
  return cam;
}

Tensor cloud_tensor(const std::vector<Vec3>& pts) {
  Tensor t({int(pts.size()), 3});
  for (size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) t.at(int64_t(3 * i + c)) = pts[i][c];
  return t;
}

// Per-pixel full-sort compositing oracle, written independently of the
// production scatter implementation.
std::vector<real> splat_oracle(const std::vector<Vec3>& pts, const std::vector<real>& desc, int D,
                               const Camera& cam, const PointSplatConfig& cfg) {
  const int W = cam.width, H = cam.height;
  std::vector<real> out(size_t(H) * size_t(W) * size_t(D + 1), 0);
  std::vector<int> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PixelProjection> proj;
  for (const Vec3& p : pts) proj.push_back(project(cam, p));
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return proj[size_t(a)].depth < proj[size_t(b)].depth; });
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real T = 1;
      for (int idx : order) {
        if (!proj[size_t(idx)].visible) continue;
        const real dx = real(x) - proj[size_t(idx)].u;
        const real dy = real(y) - proj[size_t(idx)].v;
        const real r2 = dx * dx + dy * dy;
        if (r2 > cfg.cutoff_sigma * cfg.cutoff_sigma * cfg.sigma_px * cfg.sigma_px) continue;
        const real alpha = std::min(std::exp(-r2 / (2 * cfg.sigma_px * cfg.sigma_px)), cfg.alpha_cap);
        const size_t pix = size_t(int64_t(y) * W + x);
        for (int c = 0; c < D; ++c)
          out[pix * size_t(D + 1) + size_t(c)] += T * alpha * desc[size_t(idx * D + c)];
        out[pix * size_t(D + 1) + size_t(D)] += T * alpha;
        T *= 1 - alpha;
      }
    }
  return out;
}

}  // namespace

TEST_CASE("single point splat peaks at its pixel and is radially symmetric") {
  Camera cam = small_camera(21, 30);
  std::vector<Vec3> pts = {{0, 0, 1}};  // projects to the exact image center (10,10)
  Tensor desc({1, 1}, {1.0});
  DescriptorRender r = render_descriptors(cloud_tensor(pts), desc, cam);
  CHECK(r.visible_points == 1);
  real peak = 0;
  int px = 0, py = 0;
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 21; ++x)
      if (r.coverage.at(int64_t(y) * 21 + x) > peak) {
        peak = r.coverage.at(int64_t(y) * 21 + x);
        px = x;
        py = y;
      }
  CHECK(px == 10);
  CHECK(py == 10);
  // Radial symmetry about the center.
  for (int d = 1; d <= 4; ++d) {
    const real right = r.coverage.at(int64_t(10) * 21 + 10 + d);
    const real left = r.coverage.at(int64_t(10) * 21 + 10 - d);
    const real up = r.coverage.at(int64_t(10 - d) * 21 + 10);
    const real down = r.coverage.at(int64_t(10 + d) * 21 + 10);
    CHECK(left == doctest::Approx(right).epsilon(1e-12));
    CHECK(up == doctest::Approx(right).epsilon(1e-12));
    CHECK(down == doctest::Approx(right).epsilon(1e-12));
  }
}

TEST_CASE("nearer point dominates at the overlap center") {
  Camera cam = small_camera(21, 30);
  std::vector<Vec3> pts = {{0, 0, 1}, {0, 0, 2}};  // both at the center, first nearer
  Tensor desc({2, 1}, {1.0, -1.0});
  DescriptorRender r = render_descriptors(cloud_tensor(pts), desc, cam);
  Tensor img = r.image;
  const real center = img.at(int64_t(10) * 21 + 10);
  CHECK(center > 0.99);  // near descriptor (+1) wins; far one contributes <= 0.1%
}

TEST_CASE("splatting matches the per-pixel brute-force oracle") {
  Rng rng(3);
  Camera cam = small_camera(24, 28);
  PointSplatConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + int(rng.index(10));
    const int D = 1 + int(rng.index(4));
    std::vector<Vec3> pts;
    std::vector<real> desc;
    for (int i = 0; i < n; ++i) {
      pts.emplace_back(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(0.7, 2.0));
      for (int c = 0; c < D; ++c) desc.push_back(rng.uniform(-1, 1));
    }
    Tensor desc_t({n, D}, std::vector<real>(desc));
    DescriptorRender r = render_descriptors(cloud_tensor(pts), desc_t, cam, cfg);
    auto expected = splat_oracle(pts, desc, D, cam, cfg);
    auto got = r.combined.values();
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < expected.size(); ++i)
      CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-11));
  }
}

TEST_CASE("splatting is permutation invariant") {
  Rng rng(7);
  Camera cam = small_camera(20, 25);
  std::vector<Vec3> pts;
  std::vector<real> desc;
  const int n = 12, D = 3;
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.8, 1.8));
    for (int c = 0; c < D; ++c) desc.push_back(rng.uniform());
  }
  DescriptorRender a = render_descriptors(cloud_tensor(pts), Tensor({n, D}, std::vector<real>(desc)), cam);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<Vec3> pts_p(size_t(n));
  std::vector<real> desc_p(size_t(n) * D);
  for (int i = 0; i < n; ++i) {
    pts_p[size_t(i)] = pts[size_t(perm[size_t(i)])];
    for (int c = 0; c < D; ++c) desc_p[size_t(i * D + c)] = desc[size_t(perm[size_t(i)] * D + c)];
  }
  DescriptorRender b = render_descriptors(cloud_tensor(pts_p), Tensor({n, D}, std::move(desc_p)), cam);
  for (int i = 0; i < a.combined.numel(); ++i)
    CHECK(a.combined.at(i) == doctest::Approx(b.combined.at(i)).epsilon(1e-9));
}

TEST_CASE("no visible points yields a zero image and zero coverage") {
  Camera cam = small_camera(16, 20);
  std::vector<Vec3> pts = {{0, 0, -1}, {0, 0, -2}};
  Tensor desc({2, 2}, {1, 2, 3, 4});
  DescriptorRender r = render_descriptors(cloud_tensor(pts), desc, cam);
  CHECK(r.visible_points == 0);
  for (real v : r.combined.values()) CHECK(v == 0.0);
}

TEST_CASE("splat gradient wrt points matches finite differences") {
  Rng rng(11);
  Camera cam = small_camera(16, 20);
  const int n = 5, D = 2;
  std::vector<Vec3> pts;
  Tensor desc({n, D});
  for (int i = 0; i < n; ++i)
    pts.emplace_back(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(0.9, 1.4));
  for (auto& v : desc.values()) v = rng.uniform(-1, 1);
  Tensor pixel_weights({16 * 16 * (D + 1)});
  for (auto& v : pixel_weights.values()) v = rng.uniform(-1, 1);

  auto f = [&](const Tensor& p) {
    DescriptorRender r = render_descriptors(p, desc, cam);
    return sum(mul(reshape(r.combined, {16 * 16 * (D + 1)}), pixel_weights));
  };
  FdReport r = finite_diff_check(f, cloud_tensor(pts), 1e-7, 1e-5);
  INFO(r.message);
  CHECK(r.pass);
}

TEST_CASE("splat gradient wrt descriptors when enabled") {
  Rng rng(13);
  Camera cam = small_camera(12, 15);
  std::vector<Vec3> pts = {{0.05, -0.03, 1.0}, {-0.08, 0.1, 1.2}};
  Tensor pts_t = cloud_tensor(pts);
  Tensor pixel_weights({12 * 12 * 3});
  for (auto& v : pixel_weights.values()) v = rng.uniform(-1, 1);
  auto f = [&](const Tensor& d) {
    DescriptorRender r = render_descriptors(pts_t, d, cam, {}, true);
    return sum(mul(reshape(r.combined, {12 * 12 * 3}), pixel_weights));
  };
  Tensor desc({2, 2}, {0.3, -0.6, 0.9, 0.1});
  FdReport r = finite_diff_check(f, desc, 1e-6, 1e-6);
  CHECK(r.pass);
}
