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
#include <span>
#include <string_view>
#include <vector>

#include "maco/param_store.hpp"
#include "maco/tensor.hpp"

namespace maco {

// Layer primitives. Image tensors are channels-last: [H,W,C] or [B,H,W,C].
// `where` names the calling layer in shape errors.

/// x if x > 0, otherwise exp(x) - 1.
template <typename T>
Tensor<T> elu(const Tensor<T>& x);

/// x: [in] or [N,in]; weights: [out,in]; bias: [out].
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias,
                std::string_view where = "dense");

/// 3x3 cross-correlation, zero padding 1, stride 1. kernels: [3,3,Cin,Cout].
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                      std::string_view where = "conv2d");

/// Non-overlapping 2x2 max; a trailing odd row or column is dropped.
/// Gradient goes to the first maximal element in row-major window order.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::string_view where = "maxpool2");

/// Normalizes over every axis except the last (channel) axis. Training mode
/// uses batch statistics and updates the running ones; eval uses running stats.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormState<T>& state, bool training,
                    std::string_view where = "batchnorm");

/// Unpadded width-3 cross-correlation along the sequence axis.
/// x: [L,C] or [B,L,C]; kernels: [3,C,F]; output [B,L-2,F].
template <typename T>
Tensor<T> conv1d_valid(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                       std::string_view where = "conv1d");

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis, std::string_view where = "concat");

/// Elementwise mean of equally shaped tensors.
template <typename T>
Tensor<T> mean_over_set(std::span<const Tensor<T>> xs, std::string_view where = "mean_over_set");

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, std::string_view where = "add");

/// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, std::string_view where = "mul");

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Sum of all elements, as a {1} tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> xs, std::string_view where = "stack");

/// Selects slices of the leading axis; repeated indices are allowed.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::int64_t> rows, std::string_view where = "gather_rows");

/// x: [P,D]. Row p contributes to output row segment[p]; every segment in
/// [0, num_segments) must receive at least one row. Output [num_segments,D].
template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::span<const std::int64_t> segment, std::int64_t num_segments,
                       std::string_view where = "segment_mean");

/// x: [B,L,D] -> [B,D], averaging over L.
template <typename T>
Tensor<T> mean_axis1(const Tensor<T>& x);

template <typename T>
struct SoftmaxXent {
  Tensor<T> probs;          // no graph; [K] or [E,K]
  Tensor<T> loss;           // {1}; mean over rows for batched input
  std::vector<T> losses;    // per row
};

/// Max-subtracted softmax with cross-entropy against `target`.
template <typename T>
SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>& logits, int target);

/// Batched form over rows of logits [E,K].
template <typename T>
SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

}  // namespace maco
