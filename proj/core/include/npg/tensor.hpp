// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "npg/common.hpp"

namespace npg {

class Tape;

namespace detail {

struct TensorImpl {
  std::vector<int> shape;
  std::vector<real> values;
  std::vector<real> grad;  // empty until first accumulation
  bool requires_grad = false;
  Tape* tape = nullptr;    // tape that produced this tensor, if any
  int64_t producer = -1;   // node index on that tape

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), real(0));
  }
};

}  // namespace detail

// Dense tensor handle with shared storage. Copies are shallow; training code
// treats parameters as long-lived leaves and everything else as per-iteration
// intermediates.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<real> values);

  static Tensor scalar(real v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, real v);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return int(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[size_t(i)]; }
  int64_t numel() const { return int64_t(impl_->values.size()); }

  std::span<real> values() { return impl_->values; }
  std::span<const real> values() const { return impl_->values; }
  real& at(int64_t i) { return impl_->values[size_t(i)]; }
  real at(int64_t i) const { return impl_->values[size_t(i)]; }
  real item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    impl_->requires_grad = b;
    return *this;
  }

  // Gradient of the last backward pass; zeros if this leaf was never reached.
  std::span<const real> grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  std::span<real> grad_mutable() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (impl_->has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), real(0));
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

std::string shape_str(const std::vector<int>& shape);

// Reverse-mode tape: a Wengert list of recorded primitives. Creation order is
// topological by construction; backward walks it once in reverse.
class Tape {
 public:
  struct Node {
    virtual ~Node() = default;
    virtual void backward() = 0;
    virtual const char* name() const = 0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Appends a node and marks `out` as produced at that position.
  void record(std::unique_ptr<Node> node, const std::shared_ptr<detail::TensorImpl>& out);

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every
  // requires-grad tensor reachable from the root. May be called repeatedly;
  // gradients accumulate until zero_grad/clear.
  void backward(const Tensor& root);

  void clear();
  size_t size() const { return nodes_.size(); }

  static Tape* active();

  // RAII activation for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

// True when a tape is active and any operand requires gradients; primitives
// use this to decide whether to record.
inline bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace npg
