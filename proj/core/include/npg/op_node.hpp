// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "npg/tensor.hpp"

namespace npg {

// Shared machinery for recording primitives. Modules with hand-derived
// adjoints (the splatting rasterizer, the descriptor point renderer) record
// through the same interface as the generic ops, so one backward pass covers
// everything.
class LambdaNode final : public Tape::Node {
 public:
  LambdaNode(const char* name, std::shared_ptr<detail::TensorImpl> out,
             std::function<void(const detail::TensorImpl&)> back)
      : name_(name), out_(std::move(out)), back_(std::move(back)) {}
  void backward() override {
    if (out_->has_grad()) back_(*out_);
  }
  const char* name() const override { return name_; }

 private:
  const char* name_;
  std::shared_ptr<detail::TensorImpl> out_;
  std::function<void(const detail::TensorImpl&)> back_;
};

inline void record_op(const char* name, const Tensor& out,
                      std::function<void(const detail::TensorImpl&)> back) {
  Tape::active()->record(std::make_unique<LambdaNode>(name, out.impl(), std::move(back)),
                         out.impl());
}

}  // namespace npg
