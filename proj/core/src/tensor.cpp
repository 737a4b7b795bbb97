// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#include "npg/tensor.hpp"

#include <numeric>

namespace npg {

namespace {
int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    NPG_CHECK(d >= 0, "negative extent in shape " << shape_str(shape));
    n *= d;
  }
  return n;
}

thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<int> shape) {
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->values.assign(size_t(shape_numel(shape)), real(0));
  impl_->shape = std::move(shape);
}

Tensor::Tensor(std::vector<int> shape, std::vector<real> values) {
  NPG_CHECK(shape_numel(shape) == int64_t(values.size()),
            "shape " << shape_str(shape) << " does not match " << values.size() << " values");
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor Tensor::scalar(real v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, real v) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), v);
  return t;
}

real Tensor::item() const {
  NPG_CHECK(numel() == 1, "item(): tensor has " << numel() << " elements");
  return impl_->values[0];
}

Tape::~Tape() { clear(); }

void Tape::record(std::unique_ptr<Node> node, const std::shared_ptr<detail::TensorImpl>& out) {
  out->tape = this;
  out->producer = int64_t(nodes_.size());
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& root) {
  NPG_CHECK(root.defined() && root.numel() == 1, "backward: root must be a scalar tensor");
  auto impl = root.impl();
  if (impl->producer >= 0) {
    NPG_CHECK(impl->tape == this, "backward: root was recorded on a different tape");
  }
  impl->ensure_grad();
  impl->grad[0] += real(1);
  const int64_t start = impl->producer;
  for (int64_t i = start; i >= 0; --i) nodes_[size_t(i)]->backward();
}

void Tape::clear() {
  // Detach producer marks so stale tensors cannot point into freed nodes.
  nodes_.clear();
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = prev_; }

}  // namespace npg
