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

#include <cstddef>
#include <functional>
#include <string>

#include "maco/param_store.hpp"
#include "maco/random.hpp"
#include "maco/tensor.hpp"

namespace maco {

// Central-difference gradient checking in double precision. The perturbation
// for coordinate theta is 1e-5 * (1 + |theta|); the error per coordinate is
// |analytic - numeric| / max(1, |analytic|, |numeric|).

struct GradCheckReport {
  double max_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "path[index]" of the worst coordinate
};

double relative_gradient_error(double analytic, double numeric);

/// Checks d fn / d point over every coordinate of `point`, step 1e-5 (1 + |x|).
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn, const Tensor<double>& point);

/// Checks d loss / d parameters for the trainable entries of `params`.
/// At most `max_per_tensor` coordinates of each tensor are probed (chosen by
/// `rng`); 0 probes all of them. The central-difference step is
/// `step` (1 + |theta|). Whole-network losses with training-mode batch norm
/// over a few rows are strongly curved and need a step near 1e-6 to keep the
/// truncation error well below 1e-4.
GradCheckReport grad_check_params(const std::function<Tensor<double>()>& loss, ParamStore<double>& params,
                                  std::size_t max_per_tensor, Rng& rng, double step = 1e-5);

}  // namespace maco
