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

#include "maco/random.hpp"
#include "maco/tensor.hpp"

namespace maco {

/// Normal(0, 1/fan_in) weights, used for fully connected layers.
template <typename T>
Tensor<T> lecun_normal(Shape shape, std::int64_t fan_in, Rng& rng);

/// Normal(0, 2/(fan_in+fan_out)) weights, used for convolution kernels.
template <typename T>
Tensor<T> glorot_normal(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

}  // namespace maco
