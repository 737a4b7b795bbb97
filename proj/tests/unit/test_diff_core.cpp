// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "npg/fdcheck.hpp"
#include "npg/ops.hpp"
#include "npg/tensor.hpp"

using namespace npg;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, real lo = -1, real hi = 1) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("constant matmul leaves no tape entry") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 1}, {1, 1, 1});
  Tape tape;
  Tape::Scope scope(tape);
  Tensor c = matmul(a, b);
  CHECK(c.shape() == std::vector<int>{2, 1});
  CHECK(c.at(0) == doctest::Approx(6));
  CHECK(c.at(1) == doctest::Approx(15));
  CHECK(tape.size() == 0);  // no operand requires gradients
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor x({3}, {0, 0, 0});
  Tensor y = softmax(x);
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("leaky relu uses slope 0.01 by default") {
  Tensor x({1}, {-2.0});
  CHECK(leaky_relu(x).at(0) == doctest::Approx(-0.02).epsilon(1e-14));
}

TEST_CASE("backward of sum of squares") {
  Tensor x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(x, x));
    tape.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(2));
  CHECK(x.grad()[1] == doctest::Approx(4));
}

TEST_CASE("non-scalar backward root is rejected") {
  Tensor x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("shape mismatch names the offending primitive") {
  Tensor a({2, 3});
  Tensor b({4, 1});
  try {
    matmul(a, b);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  try {
    add(a, b);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}

TEST_CASE("softmax-then-dot pipeline matches finite differences") {
  Rng rng(7);
  Tensor w = random_tensor(rng, {6});
  auto f = [&](const Tensor& x) {
    Tensor s = softmax(x);
    return sum(mul(s, w));
  };
  Tensor x = random_tensor(rng, {6});
  FdReport r = finite_diff_check(f, x, 1e-6, 1e-6);
  CHECK(r.pass);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("disconnected leaf receives zero gradient") {
  Tensor x({2}, {1, 2});
  Tensor unused({3}, {5, 6, 7});
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(x, x));
    tape.backward(loss);
  }
  for (real g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward is bitwise deterministic") {
  auto run = [] {
    Rng rng(42);
    Tensor x({4, 4});
    for (auto& v : x.values()) v = rng.normal();
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor h = leaky_relu(matmul(x, x));
    Tensor loss = sum(mul(softmax(h), h));
    tape.backward(loss);
    return std::vector<real>(x.grad().begin(), x.grad().end());
  };
  auto g1 = run();
  auto g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("zero_grad leaves values untouched") {
  Tensor x({3}, {1, 2, 3});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(mul(x, x)));
  }
  CHECK(x.grad()[0] != 0.0);
  x.zero_grad();
  CHECK(x.at(0) == 1.0);
  CHECK(x.at(1) == 2.0);
  CHECK(x.at(2) == 3.0);
  for (real g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("finite_diff_check on the L2 norm") {
  Rng rng(3);
  Tensor x = random_tensor(rng, {10}, 0.5, 2.0);
  auto f = [](const Tensor& t) { return sqrt_guarded(sum(mul(t, t))); };
  FdReport r = finite_diff_check(f, x, 1e-6, 1e-5);
  CHECK(r.pass);
  // Closed form: grad = x / ||x||.
  Tensor leaf(x.shape(), std::vector<real>(x.values().begin(), x.values().end()));
  leaf.set_requires_grad(true);
  Tape tape;
  Tensor y;
  {
    Tape::Scope scope(tape);
    y = f(leaf);
    tape.backward(y);
  }
  const real norm = y.item();
  for (int i = 0; i < 10; ++i)
    CHECK(leaf.grad()[size_t(i)] == doctest::Approx(x.at(i) / norm).epsilon(1e-10));
}

TEST_CASE("finite_diff_check flags a hard max at a tie point") {
  // f = max(x0, x1) via a relu composition, evaluated exactly at the tie.
  auto f = [](const Tensor& t) {
    Tensor d = sub(slice_cols(reshape(t, {1, 2}), 0, 1), slice_cols(reshape(t, {1, 2}), 1, 2));
    Tensor relu_d = leaky_relu(d, 0.0);
    return add(sum(relu_d), sum(slice_cols(reshape(t, {1, 2}), 1, 2)));
  };
  Tensor x({2}, {0.5, 0.5});
  FdReport r = finite_diff_check(f, x, 1e-6, 1e-5);
  CHECK(r.skipped_kinks.size() == 2);
}

TEST_CASE("finite_diff_check reports non-finite f as oracle failure") {
  auto f = [](const Tensor& t) { return sum(powc(t, 1.5)); };
  Tensor x({2}, {1e-12, 1.0});  // x - step goes negative, so x^1.5 is NaN there
  FdReport r = finite_diff_check(f, x, 1e-6, 1e-5);
  CHECK(r.oracle_failure);
}

TEST_CASE("primitive gradients match finite differences on random inputs") {
  Rng rng(99);
  const real tol = 1e-5;
  const real step = 1e-6;
  const int trials = 10;

  auto check_all = [&](const char* label, auto make_f, real lo, real hi,
                       std::vector<int> shape) {
    for (int trial = 0; trial < trials; ++trial) {
      Tensor x = random_tensor(rng, shape, lo, hi);
      auto f = make_f(trial);
      FdReport r = finite_diff_check(f, x, step, tol);
      INFO(label << " trial " << trial << ": " << r.message);
      CHECK(r.pass);
    }
  };

  Rng crng(11);
  Tensor other = random_tensor(crng, {4, 3}, 0.5, 1.5);

  check_all(
      "add/mul/sub/div mix",
      [&](int) {
        return [&](const Tensor& t) {
          Tensor q = div(mul(add(t, other), sub(t, scale(other, 0.5))), add_const(mul(t, t), 1.5));
          return sum(q);
        };
      },
      -1, 1, {4, 3});

  check_all(
      "exp/sigmoid/powc/sqrt chain",
      [&](int) {
        return [](const Tensor& t) {
          return sum(sqrt_guarded(add_const(mul(sigmoid(exp(t)), powc(add_const(t, 2.0), 1.5)), 0.5)));
        };
      },
      -0.5, 0.5, {5});

  check_all(
      "matmul + softmax + leaky_relu",
      [&](int) {
        return [&](const Tensor& t) {
          Tensor h = leaky_relu(matmul(t, other));
          return sum(mul(softmax(h), h));
        };
      },
      -1, 1, {2, 4});

  check_all(
      "gather + row_sum + normalize + cross",
      [&](int) {
        return [](const Tensor& t) {
          std::vector<int> idx{2, 0, 1, 3, 2};
          Tensor g = gather_rows(t, idx);
          Tensor n = normalize_rows(g);
          Tensor c = cross_rows(n, gather_rows(t, {1, 2, 3, 0, 1}));
          return sum(row_sum(mul(c, c)));
        };
      },
      0.2, 1.0, {4, 3});

  check_all(
      "huber",
      [&](int) {
        return [](const Tensor& t) { return sum(huber(t, 0.01)); };
      },
      0.02, 0.3, {6});

  check_all(
      "blend_rows + concat + slice",
      [&](int) {
        return [](const Tensor& t) {
          std::vector<int> idx{0, 1, 2, 1, 2, 3};
          Tensor w({2, 3}, {0.2, 0.5, 0.3, 0.1, 0.8, 0.1});
          Tensor blended = blend_rows(w, t, idx);
          Tensor joined = concat_cols({slice_cols(blended, 0, 2), slice_cols(blended, 1, 3)});
          return mean(mul(joined, joined));
        };
      },
      -1, 1, {4, 3});

  check_all(
      "bilinear sample wrt image",
      [&](int) {
        return [](const Tensor& img) {
          Tensor locs({3, 2}, {0.4, 0.7, 1.2, 1.7, 2.1, 0.3});
          return sum(bilinear_sample(img, locs));
        };
      },
      0, 1, {4, 4, 2});

  check_all(
      "conv2d_valid",
      [&](int) {
        return [](const Tensor& img) {
          std::vector<real> kernel{0.1, 0.2, 0.1, 0.2, 0.4, 0.2, 0.1, 0.2, 0.1};
          Tensor c = conv2d_valid(img, kernel, 3);
          return sum(mul(c, c));
        };
      },
      0, 1, {5, 5, 1});
}

TEST_CASE("bilinear sample gradient wrt locations") {
  Rng rng(5);
  Tensor img = random_tensor(rng, {6, 6, 2}, 0, 1);
  auto f = [&](const Tensor& locs) { return sum(bilinear_sample(img, locs)); };
  // Generic interior positions away from integer lattices.
  Tensor locs({3, 2}, {1.37, 2.61, 3.14, 0.58, 2.72, 4.13});
  FdReport r = finite_diff_check(f, locs, 1e-6, 1e-5);
  CHECK(r.pass);
}

TEST_CASE("broadcast add and mul shapes") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row({3}, {10, 20, 30});
  Tensor col({2, 1}, {100, 200});
  Tensor r1 = add(a, row);
  CHECK(r1.at(0) == 11);
  CHECK(r1.at(5) == 36);
  Tensor r2 = mul(a, col);
  CHECK(r2.at(0) == 100);
  CHECK(r2.at(5) == 1200);
  // Channel broadcast on rank-3 images.
  Tensor img({2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor mask({2, 2, 1}, {1, 0, 1, 0});
  Tensor masked = mul(img, mask);
  CHECK(masked.at(3) == 0);
  CHECK(masked.at(6) == 7);
  CHECK(masked.at(11) == 0);
}

TEST_CASE("broadcast gradients reduce correctly") {
  Rng rng(17);
  Tensor a = random_tensor(rng, {3, 4});
  auto f = [&](const Tensor& row) { return sum(mul(add(a, row), add(a, row))); };
  Tensor row = random_tensor(rng, {4});
  FdReport r = finite_diff_check(f, row, 1e-6, 1e-6);
  CHECK(r.pass);
  auto g = [&](const Tensor& col) { return sum(mul(mul(a, col), add(a, col))); };
  Tensor col = random_tensor(rng, {3, 1});
  FdReport r2 = finite_diff_check(g, col, 1e-6, 1e-6);
  CHECK(r2.pass);
}

TEST_CASE("override_rows replaces values and cuts gradient flow") {
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor y = override_rows(x, {1}, {9, 9});
    CHECK(y.at(2) == 9);
    CHECK(y.at(3) == 9);
    tape.backward(sum(mul(y, y)));
  }
  CHECK(x.grad()[0] == doctest::Approx(2));
  CHECK(x.grad()[2] == 0.0);
  CHECK(x.grad()[3] == 0.0);
  CHECK(x.grad()[4] == doctest::Approx(10));
}
