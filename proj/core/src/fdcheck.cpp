// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/fdcheck.hpp"

#include <cmath>
#include <sstream>

namespace npg {

FdReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           real step, real tolerance) {
  FdReport report;

  // Tape gradient at x.
  Tensor leaf(x.shape(), std::vector<real>(x.values().begin(), x.values().end()));
  leaf.set_requires_grad(true);
  Tape tape;
  Tensor y;
  {
    Tape::Scope scope(tape);
    y = f(leaf);
  }
  NPG_CHECK(y.defined() && y.numel() == 1, "finite_diff_check: f must return a scalar");
  if (!std::isfinite(y.item())) {
    report.oracle_failure = true;
    report.message = "f(x) is non-finite";
    return report;
  }
  tape.backward(y);
  std::vector<real> analytic(leaf.grad().begin(), leaf.grad().end());

  auto eval_at = [&f](const Tensor& p) -> real {
    Tensor q = f(p);
    return q.item();
  };

  const int64_t n = x.numel();
  real max_rel = 0;
  for (int64_t i = 0; i < n; ++i) {
    Tensor p(x.shape(), std::vector<real>(x.values().begin(), x.values().end()));
    const real x0 = p.at(i);
    p.at(i) = x0 + step;
    const real fp = eval_at(p);
    p.at(i) = x0 - step;
    const real fm = eval_at(p);
    p.at(i) = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      report.oracle_failure = true;
      std::ostringstream os;
      os << "f non-finite at coordinate " << i;
      report.message = os.str();
      return report;
    }
    const real f0 = y.item();
    const real dplus = (fp - f0) / step;
    const real dminus = (f0 - fm) / step;
    const real scale = std::max({std::abs(dplus), std::abs(dminus), real(1)});
    // One-sided estimates that disagree badly indicate the sample straddles a
    // kink; central differencing is meaningless there.
    if (std::abs(dplus - dminus) > real(0.05) * scale + real(100) * step) {
      report.skipped_kinks.push_back(int(i));
      continue;
    }
    const real numeric = (fp - fm) / (real(2) * step);
    const real denom = std::max({std::abs(numeric), std::abs(analytic[size_t(i)]), real(1e-8)});
    const real rel = std::abs(numeric - analytic[size_t(i)]) / denom;
    max_rel = std::max(max_rel, rel);
    ++report.checked;
  }

  report.max_rel_error = max_rel;
  report.pass = max_rel < tolerance;
  if (!report.pass) {
    std::ostringstream os;
    os << "max relative error " << max_rel << " exceeds tolerance " << tolerance;
    report.message = os.str();
  }
  return report;
}

}  // namespace npg
