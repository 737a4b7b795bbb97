// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Geometry>
#include <cmath>

#include "doctest.h"
#include "npg/geometry.hpp"

using namespace npg;

namespace {

Camera test_camera() {
  Camera cam;
  cam.fx = cam.fy = 100;
  cam.cx = cam.cy = 50;
  cam.width = cam.height = 100;
  return cam;
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaternion<real> q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

TEST_CASE("principal axis projects to the principal point") {
  Camera cam = test_camera();
  PixelProjection p = project(cam, Vec3(0, 0, 1));
  CHECK(p.visible);
  CHECK(p.u == doctest::Approx(50));
  CHECK(p.v == doctest::Approx(50));
  CHECK(p.depth == doctest::Approx(1));
}

TEST_CASE("projection is linear in X over Z") {
  Camera cam = test_camera();
  PixelProjection p = project(cam, Vec3(0.1, 0, 1));
  CHECK(p.u == doctest::Approx(60));
  CHECK(p.v == doctest::Approx(50));
}

TEST_CASE("points behind the camera are flagged invisible") {
  Camera cam = test_camera();
  CHECK_FALSE(project(cam, Vec3(0, 0, -1)).visible);
  CHECK_FALSE(project(cam, Vec3(0, 0, 1e-9)).visible);
}

TEST_CASE("projection matches the homogeneous 4x4 pipeline oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Camera cam = test_camera();
    cam.rotation = random_rotation(rng);
    cam.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    cam.fx = rng.uniform(50, 200);
    cam.fy = rng.uniform(50, 200);
    Vec3 point(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));

    const Mat4 M = cam.world_to_camera_matrix();
    Vec4 h(point.x(), point.y(), point.z(), 1);
    Vec4 pc = M * h;
    if (pc.z() <= 1e-8) {
      CHECK_FALSE(project(cam, point).visible);
      continue;
    }
    const real u = cam.fx * pc.x() / pc.z() + cam.cx;
    const real v = cam.fy * pc.y() / pc.z() + cam.cy;
    PixelProjection p = project(cam, point);
    REQUIRE(p.visible);
    CHECK(p.u == doctest::Approx(u).epsilon(1e-10));
    CHECK(p.v == doctest::Approx(v).epsilon(1e-10));
    CHECK(p.depth == doctest::Approx(pc.z()).epsilon(1e-10));
  }
}

TEST_CASE("projection is scale invariant along camera-space rays") {
  Rng rng(4);
  Camera cam = test_camera();
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 pc(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 3.0));
    const real lambda = rng.uniform(0.1, 10.0);
    PixelProjection a = project(cam, pc);
    PixelProjection b = project(cam, Vec3(lambda * pc));
    REQUIRE(a.visible);
    REQUIRE(b.visible);
    CHECK(a.u == doctest::Approx(b.u).epsilon(1e-12));
    CHECK(a.v == doctest::Approx(b.v).epsilon(1e-12));
  }
}

TEST_CASE("identity quaternion gives the identity matrix") {
  RotationParam q{1, 0, 0, 0};
  CHECK((q.to_matrix() - Mat3::Identity()).norm() == doctest::Approx(0));
}

TEST_CASE("quaternion for 90 degrees about x") {
  const real c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  RotationParam q{c, s, 0, 0};
  Mat3 expected;
  expected << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  CHECK((q.to_matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random quaternions give orthonormal det +1 matrices") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    RotationParam q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    Mat3 R = q.to_matrix();
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1).epsilon(1e-12));
  }
}

TEST_CASE("q and -q give the same rotation exactly") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    RotationParam q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    RotationParam nq{-q.w, -q.x, -q.y, -q.z};
    CHECK((q.to_matrix() - nq.to_matrix()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("zero quaternion is rejected") {
  RotationParam q{0, 0, 0, 0};
  CHECK_THROWS_AS(q.to_matrix(), Error);
}

TEST_CASE("bilinear sampling at pixel centers and midpoints") {
  ImageBuffer img(2, 1, 1);
  img.at(0, 0, 0) = 0;
  img.at(1, 0, 0) = 1;
  CHECK(bilinear_sample(img, 0, 0, 0) == doctest::Approx(0));
  CHECK(bilinear_sample(img, 1, 0, 0) == doctest::Approx(1));
  CHECK(bilinear_sample(img, 0.5, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("bilinear sampling matches the 4-neighbor weighted sum") {
  Rng rng(30);
  ImageBuffer img(7, 5, 3);
  for (auto& v : img.data) v = rng.uniform();
  for (int trial = 0; trial < 100; ++trial) {
    const real x = rng.uniform(0, 6);
    const real y = rng.uniform(0, 4);
    const int x0 = std::min(int(std::floor(x)), 5), y0 = std::min(int(std::floor(y)), 3);
    const real fx = x - x0, fy = y - y0;
    for (int c = 0; c < 3; ++c) {
      const real expected = (1 - fy) * ((1 - fx) * img.at(x0, y0, c) + fx * img.at(x0 + 1, y0, c)) +
                            fy * ((1 - fx) * img.at(x0, y0 + 1, c) + fx * img.at(x0 + 1, y0 + 1, c));
      CHECK(bilinear_sample(img, x, y, c) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilinear sampling is exact on affine images") {
  ImageBuffer img(9, 9, 1);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) img.at(x, y, 0) = 0.3 * x - 0.7 * y + 2.0;
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const real x = rng.uniform(0, 8);
    const real y = rng.uniform(0, 8);
    CHECK(std::abs(bilinear_sample(img, x, y, 0) - (0.3 * x - 0.7 * y + 2.0)) < 1e-12);
  }
}

TEST_CASE("out-of-bounds sampling clamps to the border") {
  ImageBuffer img(2, 2, 1);
  img.at(0, 0, 0) = 1;
  img.at(1, 0, 0) = 2;
  img.at(0, 1, 0) = 3;
  img.at(1, 1, 0) = 4;
  CHECK(bilinear_sample(img, -5, -5, 0) == doctest::Approx(1));
  CHECK(bilinear_sample(img, 10, 10, 0) == doctest::Approx(4));
}

TEST_CASE("camera validation rejects a non-orthonormal rotation") {
  Camera cam = test_camera();
  cam.validate();
  cam.rotation(0, 0) = 0.9;
  CHECK_THROWS_AS(cam.validate(), Error);
}
