// Copyright 2026 The MACO Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "maco/error.hpp"

namespace maco {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// 64-byte aligned allocator whose value-initialization is
/// default-initialization: `Buffer<T> b(n)` leaves values unset. Fixed
/// alignment keeps vectorized reductions bit-reproducible, since Eigen picks
/// its peeling from the runtime address.
template <typename T>
struct DefaultInitAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  DefaultInitAllocator() = default;
  template <typename U>
  DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const DefaultInitAllocator<U>&) const noexcept {
    return true;
  }
};

/// Tensor storage. Unlike std::vector, Buffer<T>(n) leaves values unset.
template <typename T>
using Buffer = std::vector<T, DefaultInitAllocator<T>>;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::uint64_t id = 0;  // 0: not part of any graph
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Buffer<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Whether ops record a graph for their outputs. Thread-local.
bool grad_enabled();

/// Disables graph recording for its lifetime; evaluation-only forwards use it.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array with an optional gradient slot.
///
/// Copies are shallow: two Tensor values may refer to the same storage, which
/// is how a ParamStore entry and the layer using it stay in sync. Use clone()
/// for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<detail::Node<T>>()) {
    check_shape(shape);
    node_->data.assign(static_cast<std::size_t>(numel(shape)), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, const std::vector<T>& values) : Tensor(std::move(shape), Buffer<T>(values.begin(), values.end())) {}
  Tensor(Shape shape, std::initializer_list<T> values) : Tensor(std::move(shape), Buffer<T>(values)) {}

  Tensor(Shape shape, Buffer<T> values) : node_(std::make_shared<detail::Node<T>>()) {
    check_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
      fail(ErrorKind::kShape, "Tensor", "shape " + shape_str(shape) + " needs " +
                                            std::to_string(numel(shape)) + " values, got " +
                                            std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, Buffer<T>{value}); }

  /// Leaf that accumulates gradient during backward.
  static Tensor parameter(Shape shape, const std::vector<T>& values) {
    Tensor t(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const {
    if (size() != 1) fail(ErrorKind::kShape, "Tensor::item", "tensor has " + std::to_string(size()) + " elements");
    return node_->data[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on && node_->id == 0) node_->id = detail::next_node_id();
    if (!on) node_->id = 0;
  }
  std::optional<std::uint64_t> node_id() const {
    if (!node_ || node_->id == 0) return std::nullopt;
    return node_->id;
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->data.size(), T(0));
    else node_->grad.clear();
  }

  /// Independent copy of the values; keeps requires_grad, drops graph history.
  Tensor clone() const {
    Tensor t(node_->shape, node_->data);
    if (node_->requires_grad) t.set_requires_grad(true);
    return t;
  }
  /// Copy of the values with no graph identity.
  Tensor detach() const { return Tensor(node_->shape, node_->data); }

  template <typename U>
  Tensor<U> cast() const {
    Buffer<U> out(node_->data.begin(), node_->data.end());
    return Tensor<U>(node_->shape, std::move(out));
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Internal graph access used by ops.
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) fail(ErrorKind::kShape, "Tensor", "rank-0 shapes are not used; use {1}");
    for (auto e : shape) {
      if (e <= 0) fail(ErrorKind::kShape, "Tensor", "non-positive extent in " + shape_str(shape));
    }
  }

  std::shared_ptr<detail::Node<T>> node_;
};

/// Builds an op output. Records `backward` and `parents` only when grad mode is
/// on and some parent requires gradient.
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> values, std::vector<Tensor<T>> parents,
                      std::function<void(detail::Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.id = detail::next_node_id();
  for (auto& p : parents) node.parents.push_back(p.node());
  node.backward = std::move(backward);
  return out;
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every leaf
/// that requires grad; intermediate gradients and the graph are released.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace maco
