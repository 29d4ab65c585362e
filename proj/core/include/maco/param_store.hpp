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

#include <string>
#include <string_view>
#include <deque>
#include <unordered_map>
#include <utility>
#include <vector>

#include "maco/tensor.hpp"

namespace maco {

/// Named parameters in insertion order; references returned by add() stay valid. Paths look like
/// "feature/block0/conv/kernel". Non-trainable entries (batch-norm running
/// statistics) live here too so that checkpoints capture them.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string path;
    Tensor<T> tensor;
    bool trainable;
  };

  Tensor<T>& add(std::string path, Tensor<T> tensor, bool trainable = true) {
    if (index_.count(path)) fail(ErrorKind::kConfig, path, "duplicate parameter path");
    tensor.set_requires_grad(trainable);
    index_.emplace(path, entries_.size());
    entries_.push_back(Entry{std::move(path), std::move(tensor), trainable});
    return entries_.back().tensor;
  }

  bool contains(std::string_view path) const { return index_.count(std::string(path)) > 0; }

  Tensor<T>& at(std::string_view path) { return entries_[lookup(path)].tensor; }
  const Tensor<T>& at(std::string_view path) const { return entries_[lookup(path)].tensor; }

  std::size_t size() const { return entries_.size(); }
  std::deque<Entry>& entries() { return entries_; }
  const std::deque<Entry>& entries() const { return entries_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.trainable ? e.tensor.size() : 0;
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Deep copy; the copy shares no storage with this store.
  ParamStore clone() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.path, e.tensor.clone(), e.trainable);
    return out;
  }

  /// Overwrites values from `other`, which must have identical paths and shapes.
  void assign(const ParamStore& other) {
    if (other.size() != size()) fail(ErrorKind::kShape, "ParamStore::assign", "entry count differs");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& dst = entries_[i];
      const auto& src = other.entries_[i];
      if (dst.path != src.path || dst.tensor.shape() != src.tensor.shape()) {
        fail(ErrorKind::kShape, dst.path, "does not match " + src.path + " " + shape_str(src.tensor.shape()));
      }
      std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst.tensor.data().begin());
    }
  }

 private:
  std::size_t lookup(std::string_view path) const {
    auto it = index_.find(std::string(path));
    if (it == index_.end()) fail(ErrorKind::kConfig, std::string(path), "no such parameter");
    return it->second;
  }

  std::deque<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient view per trainable parameter, in store order.
template <typename T>
using GradientMap = std::vector<std::pair<std::string, std::span<const T>>>;

/// Zeroes all gradients, runs the reverse sweep and returns every trainable
/// parameter's gradient. Parameters the loss does not reach get exact zeros.
template <typename T>
GradientMap<T> backward(const Tensor<T>& loss, ParamStore<T>& params) {
  params.zero_grad();
  backward(loss);
  GradientMap<T> out;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    out.emplace_back(e.path, std::span<const T>(e.tensor.mutable_grad()));
  }
  return out;
}

/// Per-channel batch normalization parameters. The four tensors alias entries
/// of the owning ParamStore.
template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.99);
  T epsilon = T(1e-3);

  std::int64_t channels() const { return gamma.dim(0); }

  /// Registers gamma=1, beta=0, mean=0, var=1 under `prefix`.
  static BatchNormState create(ParamStore<T>& store, const std::string& prefix, std::int64_t channels,
                               T momentum = T(0.99), T epsilon = T(1e-3)) {
    BatchNormState s;
    s.gamma = store.add(prefix + "/gamma", Tensor<T>(Shape{channels}, T(1)));
    s.beta = store.add(prefix + "/beta", Tensor<T>(Shape{channels}, T(0)));
    s.running_mean = store.add(prefix + "/running_mean", Tensor<T>(Shape{channels}, T(0)), false);
    s.running_var = store.add(prefix + "/running_var", Tensor<T>(Shape{channels}, T(1)), false);
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
  }

  /// Rebinds to the entries registered by create() in `store`.
  static BatchNormState bind(ParamStore<T>& store, const std::string& prefix, T momentum, T epsilon) {
    BatchNormState s;
    s.gamma = store.at(prefix + "/gamma");
    s.beta = store.at(prefix + "/beta");
    s.running_mean = store.at(prefix + "/running_mean");
    s.running_var = store.at(prefix + "/running_var");
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
  }
};

}  // namespace maco
