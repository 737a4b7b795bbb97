// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <functional>

#include "npg/op_node.hpp"

namespace npg {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

enum class Bc { Same, ScalarB, ScalarA, RowB, ColB, ChanB };

Bc resolve_broadcast(const char* op, const std::vector<int>& as, const std::vector<int>& bs) {
  if (as == bs) return Bc::Same;
  auto numel = [](const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  };
  if (numel(bs) == 1) return Bc::ScalarB;
  if (numel(as) == 1) return Bc::ScalarA;
  if (as.size() == 2) {
    if ((bs.size() == 1 && bs[0] == as[1]) ||
        (bs.size() == 2 && bs[0] == 1 && bs[1] == as[1]))
      return Bc::RowB;
    if (bs.size() == 2 && bs[0] == as[0] && bs[1] == 1) return Bc::ColB;
  }
  if (as.size() == 3 && bs.size() == 3 && bs[0] == as[0] && bs[1] == as[1] && bs[2] == 1)
    return Bc::ChanB;
  NPG_CHECK(false, op << ": incompatible shapes " << shape_str(as) << " vs " << shape_str(bs));
}

// f(a,b) -> out; dfa/dfb give d(out)/d(a|b) evaluated at (a,b).
template <class F, class DFA, class DFB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DFA dfa, DFB dfb) {
  NPG_CHECK(a.defined() && b.defined(), name << ": undefined operand");
  const Bc bc = resolve_broadcast(name, a.shape(), b.shape());
  const std::vector<int>& out_shape = (bc == Bc::ScalarA) ? b.shape() : a.shape();

  // Inner extent used by the index maps.
  int64_t stride = 1;
  if (bc == Bc::RowB || bc == Bc::ColB) stride = a.shape()[1];
  if (bc == Bc::ChanB) stride = a.shape()[2];

  auto map_b = [bc, stride](int64_t i) -> int64_t {
    switch (bc) {
      case Bc::Same: return i;
      case Bc::ScalarB: return 0;
      case Bc::ScalarA: return i;  // unused for b
      case Bc::RowB: return i % stride;
      case Bc::ColB: return i / stride;
      case Bc::ChanB: return i / stride;
    }
    return i;
  };
  auto map_a = [bc](int64_t i) -> int64_t { return bc == Bc::ScalarA ? 0 : i; };
  auto map_bb = [bc, map_b](int64_t i) -> int64_t { return bc == Bc::ScalarA ? i : map_b(i); };

  Tensor out(out_shape);
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) ov[size_t(i)] = f(av[size_t(map_a(i))], bv[size_t(map_bb(i))]);

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl();
    auto bi = b.impl();
    record_op(name, out, [ai, bi, map_a, map_bb, dfa, dfb, n](const TensorImpl& o) {
      const bool ga = ai->requires_grad;
      const bool gb = bi->requires_grad;
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const real g = o.grad[size_t(i)];
        if (g == real(0)) continue;
        const int64_t ia = map_a(i), ib = map_bb(i);
        const real x = ai->values[size_t(ia)], y = bi->values[size_t(ib)];
        if (ga) ai->grad[size_t(ia)] += dfa(x, y) * g;
        if (gb) bi->grad[size_t(ib)] += dfb(x, y) * g;
      }
    });
  }
  return out;
}

template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& t, F f, DF df) {
  NPG_CHECK(t.defined(), name << ": undefined operand");
  Tensor out(t.shape());
  auto tv = t.values();
  auto ov = out.values();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) ov[size_t(i)] = f(tv[size_t(i)]);
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op(name, out, [ti, df, n](const TensorImpl& o) {
      ti->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        ti->grad[size_t(i)] += df(ti->values[size_t(i)], o.values[size_t(i)]) * o.grad[size_t(i)];
    });
  }
  return out;
}

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](real x, real y) { return x + y; }, [](real, real) { return real(1); },
      [](real, real) { return real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](real x, real y) { return x - y; }, [](real, real) { return real(1); },
      [](real, real) { return real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](real x, real y) { return x * y; }, [](real, real y) { return y; },
      [](real x, real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](real x, real y) { return x / y; },
      [](real, real y) { return real(1) / y; }, [](real x, real y) { return -x / (y * y); });
}

Tensor neg(const Tensor& t) {
  return unary_op(
      "neg", t, [](real x) { return -x; }, [](real, real) { return real(-1); });
}

Tensor scale(const Tensor& t, real c) {
  return unary_op(
      "scale", t, [c](real x) { return c * x; }, [c](real, real) { return c; });
}

Tensor add_const(const Tensor& t, real c) {
  return unary_op(
      "add_const", t, [c](real x) { return x + c; }, [](real, real) { return real(1); });
}

Tensor exp(const Tensor& t) {
  return unary_op(
      "exp", t, [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Tensor powc(const Tensor& t, real p) {
  return unary_op(
      "powc", t, [p](real x) { return std::pow(x, p); },
      [p](real x, real) {
        if (x == real(0) && p < real(1)) return real(0);
        return p * std::pow(x, p - real(1));
      });
}

Tensor sqrt_guarded(const Tensor& t) {
  constexpr real kDead = real(1e-24);
  return unary_op(
      "sqrt", t, [](real x) { return x > real(0) ? std::sqrt(x) : real(0); },
      [](real x, real y) { return x < kDead ? real(0) : real(0.5) / y; });
}

Tensor sigmoid(const Tensor& t) {
  return unary_op(
      "sigmoid", t,
      [](real x) {
        if (x >= real(0)) return real(1) / (real(1) + std::exp(-x));
        const real e = std::exp(x);
        return e / (real(1) + e);
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor leaky_relu(const Tensor& t, real slope) {
  return unary_op(
      "leaky_relu", t, [slope](real x) { return x >= real(0) ? x : slope * x; },
      [slope](real x, real) { return x >= real(0) ? real(1) : slope; });
}

Tensor huber(const Tensor& t, real eps) {
  NPG_CHECK(eps > real(0), "huber: eps must be positive");
  return unary_op(
      "huber", t,
      [eps](real x) {
        const real a = std::abs(x);
        return a <= eps ? real(0.5) * x * x / eps : a - real(0.5) * eps;
      },
      [eps](real x, real) {
        const real a = std::abs(x);
        return a <= eps ? x / eps : (x > real(0) ? real(1) : real(-1));
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  NPG_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  ConstMatMap A(a.values().data(), m, k), B(b.values().data(), k, n);
  MatMap(out.values().data(), m, n).noalias() = A * B;

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl();
    auto bi = b.impl();
    record_op("matmul", out, [ai, bi, m, k, n](const TensorImpl& o) {
      ConstMatMap G(o.grad.data(), m, n);
      ConstMatMap A(ai->values.data(), m, k), B(bi->values.data(), k, n);
      if (ai->requires_grad) {
        ai->ensure_grad();
        MatMap(ai->grad.data(), m, k).noalias() += G * B.transpose();
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        MatMap(bi->grad.data(), k, n).noalias() += A.transpose() * G;
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& t) {
  NPG_CHECK(t.rank() == 1 || t.rank() == 2, "softmax: expects rank 1 or 2, got "
                                                << shape_str(t.shape()));
  const int rows = t.rank() == 2 ? t.dim(0) : 1;
  const int cols = t.rank() == 2 ? t.dim(1) : t.dim(0);
  NPG_CHECK(cols > 0, "softmax: empty rows");
  Tensor out(t.shape());
  auto tv = t.values();
  auto ov = out.values();
  for (int r = 0; r < rows; ++r) {
    const int64_t base = int64_t(r) * cols;
    real mx = tv[size_t(base)];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, tv[size_t(base + c)]);
    real denom = 0;
    for (int c = 0; c < cols; ++c) {
      const real e = std::exp(tv[size_t(base + c)] - mx);
      ov[size_t(base + c)] = e;
      denom += e;
    }
    for (int c = 0; c < cols; ++c) ov[size_t(base + c)] /= denom;
  }
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("softmax", out, [ti, rows, cols](const TensorImpl& o) {
      ti->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const int64_t base = int64_t(r) * cols;
        real dot = 0;
        for (int c = 0; c < cols; ++c) dot += o.grad[size_t(base + c)] * o.values[size_t(base + c)];
        for (int c = 0; c < cols; ++c)
          ti->grad[size_t(base + c)] +=
              o.values[size_t(base + c)] * (o.grad[size_t(base + c)] - dot);
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& t) {
  Tensor out = Tensor::scalar(0);
  real s = 0;
  for (real v : t.values()) s += v;
  out.at(0) = s;
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("sum", out, [ti](const TensorImpl& o) {
      ti->ensure_grad();
      const real g = o.grad[0];
      for (real& d : ti->grad) d += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& t) {
  NPG_CHECK(t.numel() > 0, "mean: empty tensor");
  return scale(sum(t), real(1) / real(t.numel()));
}

Tensor row_sum(const Tensor& t) {
  NPG_CHECK(t.rank() == 2, "row_sum: expects rank 2, got " << shape_str(t.shape()));
  const int n = t.dim(0), m = t.dim(1);
  Tensor out({n});
  auto tv = t.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i) {
    real s = 0;
    for (int j = 0; j < m; ++j) s += tv[size_t(int64_t(i) * m + j)];
    ov[size_t(i)] = s;
  }
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("row_sum", out, [ti, n, m](const TensorImpl& o) {
      ti->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const real g = o.grad[size_t(i)];
        for (int j = 0; j < m; ++j) ti->grad[size_t(int64_t(i) * m + j)] += g;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
  Tensor out(std::move(shape), std::vector<real>(t.values().begin(), t.values().end()));
  NPG_CHECK(out.numel() == t.numel(), "reshape: element count changed");
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("reshape", out, [ti](const TensorImpl& o) {
      ti->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) ti->grad[i] += o.grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& t, int c0, int c1) {
  NPG_CHECK(t.rank() == 2 && 0 <= c0 && c0 < c1 && c1 <= t.dim(1),
            "slice_cols: bad range [" << c0 << "," << c1 << ") for " << shape_str(t.shape()));
  const int n = t.dim(0), m = t.dim(1), w = c1 - c0;
  Tensor out({n, w});
  auto tv = t.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) ov[size_t(int64_t(i) * w + j)] = tv[size_t(int64_t(i) * m + c0 + j)];
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("slice_cols", out, [ti, n, m, w, c0](const TensorImpl& o) {
      ti->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j)
          ti->grad[size_t(int64_t(i) * m + c0 + j)] += o.grad[size_t(int64_t(i) * w + j)];
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& t, int c0, int c1) {
  NPG_CHECK(t.rank() == 3 && 0 <= c0 && c0 < c1 && c1 <= t.dim(2),
            "slice_channels: bad range [" << c0 << "," << c1 << ") for " << shape_str(t.shape()));
  const int hw = t.dim(0) * t.dim(1), C = t.dim(2), w = c1 - c0;
  Tensor out({t.dim(0), t.dim(1), w});
  auto tv = t.values();
  auto ov = out.values();
  for (int i = 0; i < hw; ++i)
    for (int j = 0; j < w; ++j) ov[size_t(int64_t(i) * w + j)] = tv[size_t(int64_t(i) * C + c0 + j)];
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("slice_channels", out, [ti, hw, C, w, c0](const TensorImpl& o) {
      ti->ensure_grad();
      for (int i = 0; i < hw; ++i)
        for (int j = 0; j < w; ++j)
          ti->grad[size_t(int64_t(i) * C + c0 + j)] += o.grad[size_t(int64_t(i) * w + j)];
    });
  }
  return out;
}

namespace {
Tensor concat_impl(const char* name, const std::vector<Tensor>& parts, bool rows) {
  NPG_CHECK(!parts.empty(), name << ": nothing to concatenate");
  const bool rank1 = parts[0].rank() == 1;
  if (rank1) NPG_CHECK(rows, name << ": rank-1 parts concatenate along rows");
  int total = 0;
  const int fixed = rank1 ? 1 : (rows ? parts[0].dim(1) : parts[0].dim(0));
  for (const Tensor& p : parts) {
    if (rank1) {
      NPG_CHECK(p.rank() == 1, name << ": mixed ranks");
      total += p.dim(0);
    } else {
      NPG_CHECK(p.rank() == 2 && (rows ? p.dim(1) : p.dim(0)) == fixed,
                name << ": shape mismatch at " << shape_str(p.shape()));
      total += rows ? p.dim(0) : p.dim(1);
    }
  }
  std::vector<int> out_shape =
      rank1 ? std::vector<int>{total}
            : (rows ? std::vector<int>{total, fixed} : std::vector<int>{fixed, total});
  Tensor out(out_shape);
  auto ov = out.values();

  bool any_grad = false;
  for (const Tensor& p : parts) any_grad |= p.requires_grad();

  struct Piece {
    ImplPtr impl;
    int64_t offset;  // row offset or column offset
    int64_t extent;
  };
  std::vector<Piece> pieces;
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t ext = rank1 ? p.dim(0) : (rows ? p.dim(0) : p.dim(1));
    auto pv = p.values();
    if (rows) {
      std::copy(pv.begin(), pv.end(), ov.begin() + off * fixed);
    } else {
      for (int64_t r = 0; r < fixed; ++r)
        for (int64_t c = 0; c < ext; ++c)
          ov[size_t(r * total + off + c)] = pv[size_t(r * ext + c)];
    }
    pieces.push_back({p.impl(), off, ext});
    off += ext;
  }

  if (Tape::active() != nullptr && any_grad) {
    out.set_requires_grad(true);
    record_op(name, out, [pieces, rows, fixed, total](const TensorImpl& o) {
      for (const Piece& p : pieces) {
        if (!p.impl->requires_grad) continue;
        p.impl->ensure_grad();
        if (rows) {
          const int64_t base = p.offset * fixed;
          for (int64_t i = 0; i < p.extent * fixed; ++i) p.impl->grad[size_t(i)] += o.grad[size_t(base + i)];
        } else {
          for (int64_t r = 0; r < fixed; ++r)
            for (int64_t c = 0; c < p.extent; ++c)
              p.impl->grad[size_t(r * p.extent + c)] += o.grad[size_t(r * total + p.offset + c)];
        }
      }
    });
  }
  return out;
}
}  // namespace

Tensor concat_rows(const std::vector<Tensor>& parts) { return concat_impl("concat_rows", parts, true); }

Tensor concat_cols(const std::vector<Tensor>& parts) { return concat_impl("concat_cols", parts, false); }

Tensor gather_rows(const Tensor& t, const std::vector<int>& idx) {
  NPG_CHECK(t.rank() == 1 || t.rank() == 2, "gather: expects rank 1 or 2");
  const int n = t.rank() == 2 ? t.dim(0) : t.dim(0);
  const int m = t.rank() == 2 ? t.dim(1) : 1;
  for (int i : idx) NPG_CHECK(0 <= i && i < n, "gather: index " << i << " out of range " << n);
  std::vector<int> out_shape = t.rank() == 2 ? std::vector<int>{int(idx.size()), m}
                                             : std::vector<int>{int(idx.size())};
  Tensor out(out_shape);
  auto tv = t.values();
  auto ov = out.values();
  for (size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < m; ++c) ov[r * size_t(m) + size_t(c)] = tv[size_t(int64_t(idx[r]) * m + c)];
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    auto indices = idx;
    record_op("gather", out, [ti, indices, m](const TensorImpl& o) {
      ti->ensure_grad();
      for (size_t r = 0; r < indices.size(); ++r)
        for (int c = 0; c < m; ++c)
          ti->grad[size_t(int64_t(indices[r]) * m + c)] += o.grad[r * size_t(m) + size_t(c)];
    });
  }
  return out;
}

Tensor override_rows(const Tensor& t, const std::vector<int>& rows,
                     const std::vector<real>& replacement) {
  NPG_CHECK(t.rank() == 2, "override_rows: expects rank 2");
  const int m = t.dim(1);
  NPG_CHECK(replacement.size() == rows.size() * size_t(m), "override_rows: replacement size");
  Tensor out(t.shape(), std::vector<real>(t.values().begin(), t.values().end()));
  auto ov = out.values();
  for (size_t r = 0; r < rows.size(); ++r) {
    NPG_CHECK(0 <= rows[r] && rows[r] < t.dim(0), "override_rows: row out of range");
    for (int c = 0; c < m; ++c) ov[size_t(int64_t(rows[r]) * m + c)] = replacement[r * size_t(m) + size_t(c)];
  }
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    auto rr = rows;
    record_op("override_rows", out, [ti, rr, m](const TensorImpl& o) {
      ti->ensure_grad();
      std::vector<char> masked(ti->values.size() / size_t(m), 0);
      for (int r : rr) masked[size_t(r)] = 1;
      const int64_t n = int64_t(masked.size());
      for (int64_t i = 0; i < n; ++i) {
        if (masked[size_t(i)]) continue;
        for (int c = 0; c < m; ++c) ti->grad[size_t(i * m + c)] += o.grad[size_t(i * m + c)];
      }
    });
  }
  return out;
}

Tensor cross_rows(const Tensor& a, const Tensor& b) {
  NPG_CHECK(a.rank() == 2 && a.dim(1) == 3 && a.shape() == b.shape(),
            "cross: expects matching (n,3) tensors, got " << shape_str(a.shape()) << " vs "
                                                          << shape_str(b.shape()));
  const int n = a.dim(0);
  Tensor out({n, 3});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i) {
    const size_t o = size_t(i) * 3;
    ov[o + 0] = av[o + 1] * bv[o + 2] - av[o + 2] * bv[o + 1];
    ov[o + 1] = av[o + 2] * bv[o + 0] - av[o + 0] * bv[o + 2];
    ov[o + 2] = av[o + 0] * bv[o + 1] - av[o + 1] * bv[o + 0];
  }
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl();
    auto bi = b.impl();
    record_op("cross", out, [ai, bi, n](const TensorImpl& og) {
      const bool ga = ai->requires_grad, gb = bi->requires_grad;
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const size_t o = size_t(i) * 3;
        const real gx = og.grad[o], gy = og.grad[o + 1], gz = og.grad[o + 2];
        const real ax = ai->values[o], ay = ai->values[o + 1], az = ai->values[o + 2];
        const real bx = bi->values[o], by = bi->values[o + 1], bz = bi->values[o + 2];
        if (ga) {  // da = b x g
          ai->grad[o + 0] += by * gz - bz * gy;
          ai->grad[o + 1] += bz * gx - bx * gz;
          ai->grad[o + 2] += bx * gy - by * gx;
        }
        if (gb) {  // db = g x a
          bi->grad[o + 0] += gy * az - gz * ay;
          bi->grad[o + 1] += gz * ax - gx * az;
          bi->grad[o + 2] += gx * ay - gy * ax;
        }
      }
    });
  }
  return out;
}

Tensor normalize_rows(const Tensor& t) {
  NPG_CHECK(t.rank() == 2 && t.dim(1) == 3, "normalize: expects (n,3)");
  constexpr real kMin = real(1e-12);
  const int n = t.dim(0);
  Tensor out({n, 3});
  std::vector<real> norms(static_cast<size_t>(n));
  auto tv = t.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i) {
    const size_t o = size_t(i) * 3;
    const real nm = std::sqrt(tv[o] * tv[o] + tv[o + 1] * tv[o + 1] + tv[o + 2] * tv[o + 2]);
    norms[size_t(i)] = nm;
    const real inv = nm < kMin ? real(0) : real(1) / nm;
    ov[o] = tv[o] * inv;
    ov[o + 1] = tv[o + 1] * inv;
    ov[o + 2] = tv[o + 2] * inv;
  }
  if (recording({&t})) {
    out.set_requires_grad(true);
    auto ti = t.impl();
    record_op("normalize", out, [ti, n, norms](const TensorImpl& og) {
      ti->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const real nm = norms[size_t(i)];
        if (nm < kMin) continue;
        const size_t o = size_t(i) * 3;
        const real yx = og.values[o], yy = og.values[o + 1], yz = og.values[o + 2];
        const real gx = og.grad[o], gy = og.grad[o + 1], gz = og.grad[o + 2];
        const real dot = yx * gx + yy * gy + yz * gz;
        const real inv = real(1) / nm;
        ti->grad[o + 0] += (gx - yx * dot) * inv;
        ti->grad[o + 1] += (gy - yy * dot) * inv;
        ti->grad[o + 2] += (gz - yz * dot) * inv;
      }
    });
  }
  return out;
}

Tensor blend_rows(const Tensor& weights, const Tensor& points, const std::vector<int>& idx) {
  NPG_CHECK(weights.rank() == 2, "blend_rows: weights must be (n,k)");
  NPG_CHECK(points.rank() == 2, "blend_rows: points must be (M,m)");
  const int n = weights.dim(0), k = weights.dim(1), m = points.dim(1), M = points.dim(0);
  NPG_CHECK(idx.size() == size_t(n) * size_t(k), "blend_rows: index table size");
  for (int i : idx) NPG_CHECK(0 <= i && i < M, "blend_rows: index out of range");
  Tensor out({n, m});
  auto wv = weights.values();
  auto pv = points.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const real w = wv[size_t(int64_t(i) * k + j)];
      const int64_t row = idx[size_t(int64_t(i) * k + j)];
      for (int c = 0; c < m; ++c) ov[size_t(int64_t(i) * m + c)] += w * pv[size_t(row * m + c)];
    }
  if (recording({&weights, &points})) {
    out.set_requires_grad(true);
    auto wi = weights.impl();
    auto pi = points.impl();
    auto indices = idx;
    record_op("blend_rows", out, [wi, pi, indices, n, k, m](const TensorImpl& o) {
      const bool gw = wi->requires_grad, gp = pi->requires_grad;
      if (gw) wi->ensure_grad();
      if (gp) pi->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
          const int64_t row = indices[size_t(int64_t(i) * k + j)];
          const real w = wi->values[size_t(int64_t(i) * k + j)];
          for (int c = 0; c < m; ++c) {
            const real g = o.grad[size_t(int64_t(i) * m + c)];
            if (gw) wi->grad[size_t(int64_t(i) * k + j)] += g * pi->values[size_t(row * m + c)];
            if (gp) pi->grad[size_t(row * m + c)] += g * w;
          }
        }
    });
  }
  return out;
}

Tensor bilinear_sample(const Tensor& image, const Tensor& locations) {
  NPG_CHECK(image.rank() == 3, "bilinear: image must be {H,W,C}");
  NPG_CHECK(locations.rank() == 2 && locations.dim(1) == 2, "bilinear: locations must be (n,2)");
  const int H = image.dim(0), W = image.dim(1), C = image.dim(2), n = locations.dim(0);
  NPG_CHECK(H >= 1 && W >= 1, "bilinear: empty image");
  Tensor out({n, C});
  auto iv = image.values();
  auto lv = locations.values();
  auto ov = out.values();

  struct Sample {
    int x0, y0;
    real fx, fy;
    bool clamped_x, clamped_y;
  };
  std::vector<Sample> samples(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    real x = lv[size_t(i) * 2 + 0];
    real y = lv[size_t(i) * 2 + 1];
    NPG_CHECK(std::isfinite(x) && std::isfinite(y), "bilinear: non-finite location");
    const bool cx = x < real(0) || x > real(W - 1);
    const bool cy = y < real(0) || y > real(H - 1);
    x = std::clamp(x, real(0), real(W - 1));
    y = std::clamp(y, real(0), real(H - 1));
    int x0 = std::min(int(std::floor(x)), W >= 2 ? W - 2 : 0);
    int y0 = std::min(int(std::floor(y)), H >= 2 ? H - 2 : 0);
    samples[size_t(i)] = {x0, y0, x - real(x0), y - real(y0), cx, cy};
    const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    const Sample& s = samples[size_t(i)];
    for (int c = 0; c < C; ++c) {
      const real v00 = iv[size_t((int64_t(s.y0) * W + x0) * C + c)];
      const real v01 = iv[size_t((int64_t(s.y0) * W + x1) * C + c)];
      const real v10 = iv[size_t((int64_t(y1) * W + x0) * C + c)];
      const real v11 = iv[size_t((int64_t(y1) * W + x1) * C + c)];
      ov[size_t(int64_t(i) * C + c)] = (real(1) - s.fy) * ((real(1) - s.fx) * v00 + s.fx * v01) +
                                       s.fy * ((real(1) - s.fx) * v10 + s.fx * v11);
    }
  }

  if (recording({&image, &locations})) {
    out.set_requires_grad(true);
    auto ii = image.impl();
    auto li = locations.impl();
    record_op("bilinear", out, [ii, li, samples, H, W, C, n](const TensorImpl& o) {
      const bool gi = ii->requires_grad, gl = li->requires_grad;
      if (gi) ii->ensure_grad();
      if (gl) li->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const Sample& s = samples[size_t(i)];
        const int x1 = std::min(s.x0 + 1, W - 1), y1 = std::min(s.y0 + 1, H - 1);
        real gx = 0, gy = 0;
        for (int c = 0; c < C; ++c) {
          const real g = o.grad[size_t(int64_t(i) * C + c)];
          if (g == real(0)) continue;
          const size_t i00 = size_t((int64_t(s.y0) * W + s.x0) * C + c);
          const size_t i01 = size_t((int64_t(s.y0) * W + x1) * C + c);
          const size_t i10 = size_t((int64_t(y1) * W + s.x0) * C + c);
          const size_t i11 = size_t((int64_t(y1) * W + x1) * C + c);
          if (gi) {
            ii->grad[i00] += g * (real(1) - s.fx) * (real(1) - s.fy);
            ii->grad[i01] += g * s.fx * (real(1) - s.fy);
            ii->grad[i10] += g * (real(1) - s.fx) * s.fy;
            ii->grad[i11] += g * s.fx * s.fy;
          }
          if (gl) {
            const real v00 = ii->values[i00], v01 = ii->values[i01];
            const real v10 = ii->values[i10], v11 = ii->values[i11];
            gx += g * ((real(1) - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
            gy += g * ((real(1) - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
          }
        }
        if (gl) {
          if (!s.clamped_x) li->grad[size_t(i) * 2 + 0] += gx;
          if (!s.clamped_y) li->grad[size_t(i) * 2 + 1] += gy;
        }
      }
    });
  }
  return out;
}

Tensor conv2d_valid(const Tensor& image, const std::vector<real>& kernel, int ksize) {
  NPG_CHECK(image.rank() == 3, "conv2d: image must be {H,W,C}");
  NPG_CHECK(int(kernel.size()) == ksize * ksize, "conv2d: kernel size mismatch");
  const int H = image.dim(0), W = image.dim(1), C = image.dim(2);
  NPG_CHECK(H >= ksize && W >= ksize, "conv2d: image smaller than kernel");
  const int OH = H - ksize + 1, OW = W - ksize + 1;
  Tensor out({OH, OW, C});
  auto iv = image.values();
  auto ov = out.values();
  for (int y = 0; y < OH; ++y)
    for (int x = 0; x < OW; ++x)
      for (int c = 0; c < C; ++c) {
        real s = 0;
        for (int ky = 0; ky < ksize; ++ky)
          for (int kx = 0; kx < ksize; ++kx)
            s += kernel[size_t(ky * ksize + kx)] *
                 iv[size_t((int64_t(y + ky) * W + (x + kx)) * C + c)];
        ov[size_t((int64_t(y) * OW + x) * C + c)] = s;
      }
  if (recording({&image})) {
    out.set_requires_grad(true);
    auto ii = image.impl();
    auto kk = kernel;
    record_op("conv2d", out, [ii, kk, ksize, H, W, C, OH, OW](const TensorImpl& o) {
      ii->ensure_grad();
      for (int y = 0; y < OH; ++y)
        for (int x = 0; x < OW; ++x)
          for (int c = 0; c < C; ++c) {
            const real g = o.grad[size_t((int64_t(y) * OW + x) * C + c)];
            if (g == real(0)) continue;
            for (int ky = 0; ky < ksize; ++ky)
              for (int kx = 0; kx < ksize; ++kx)
                ii->grad[size_t((int64_t(y + ky) * W + (x + kx)) * C + c)] +=
                    g * kk[size_t(ky * ksize + kx)];
          }
    });
  }
  return out;
}

}  // namespace npg
