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

#include "maco/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace maco {
namespace {

constexpr double kPrimitiveStep = 1e-5;

template <typename Eval>
double central_difference(double& coord, double step, Eval&& eval) {
  const double saved = coord;
  const double h = step * (1.0 + std::abs(saved));
  coord = saved + h;
  const double up = eval();
  coord = saved - h;
  const double down = eval();
  coord = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace

double relative_gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn, const Tensor<double>& point) {
  Tensor<double> x = point.clone();
  x.set_requires_grad(true);
  Tensor<double> loss = fn(x);
  backward(loss);
  std::vector<double> analytic(x.size(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  NoGradGuard no_grad;
  Tensor<double> probe = point.clone();
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double numeric = central_difference(probe.data()[i], kPrimitiveStep, [&] { return fn(probe).item(); });
    worst = std::max(worst, relative_gradient_error(analytic[i], numeric));
  }
  return worst;
}

GradCheckReport grad_check_params(const std::function<Tensor<double>()>& loss, ParamStore<double>& params,
                                  std::size_t max_per_tensor, Rng& rng, double step) {
  backward(loss(), params);
  GradCheckReport report;
  NoGradGuard no_grad;
  for (auto& entry : params.entries()) {
    if (!entry.trainable) continue;
    const std::vector<double> analytic(entry.tensor.grad().begin(), entry.tensor.grad().end());
    std::vector<std::size_t> coords(entry.tensor.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_per_tensor != 0 && coords.size() > max_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(max_per_tensor);
    }
    for (std::size_t i : coords) {
      const double numeric = central_difference(entry.tensor.data()[i], step, [&] { return loss().item(); });
      const double err = relative_gradient_error(analytic[i], numeric);
      ++report.coordinates;
      if (err >= report.max_error) {
        report.max_error = err;
        report.worst = entry.path + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace maco
