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

#include "maco/init.hpp"

#include <cmath>
#include <vector>

namespace maco {
namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::vector<T> values(static_cast<std::size_t>(numel(shape)));
  for (auto& v : values) v = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace

template <typename T>
Tensor<T> lecun_normal(Shape shape, std::int64_t fan_in, Rng& rng) {
  return normal_tensor<T>(std::move(shape), std::sqrt(1.0 / static_cast<double>(fan_in)), rng);
}

template <typename T>
Tensor<T> glorot_normal(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  return normal_tensor<T>(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)), rng);
}

template Tensor<float> lecun_normal<float>(Shape, std::int64_t, Rng&);
template Tensor<double> lecun_normal<double>(Shape, std::int64_t, Rng&);
template Tensor<float> glorot_normal<float>(Shape, std::int64_t, std::int64_t, Rng&);
template Tensor<double> glorot_normal<double>(Shape, std::int64_t, std::int64_t, Rng&);

}  // namespace maco
