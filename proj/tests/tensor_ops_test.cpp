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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "maco/grad_check.hpp"
#include "maco/init.hpp"
#include "maco/ops.hpp"
#include "support/oracles.hpp"

namespace maco {
namespace {

using testing::random_tensor;

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

TEST(Elu, FixedPointsAndNegativeBranch) {
  Tensor<double> x(Shape{3}, {0.0, 2.5, -1.0});
  auto y = values(elu(x));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.5);
  EXPECT_NEAR(y[2], -0.632120558828557678, 1e-15);
}

TEST(Elu, GradCheckAtNegativeHalf) {
  Tensor<double> x(Shape{1}, {-0.5});
  EXPECT_LT(grad_check([](const Tensor<double>& p) { return sum(elu(p)); }, x), 1e-6);
}

TEST(GradCheck, LinearFunctionAtMachinePrecision) {
  Rng rng(3);
  auto w = random_tensor<double>(Shape{6}, rng);
  auto x = random_tensor<double>(Shape{6}, rng);
  EXPECT_LT(grad_check([&](const Tensor<double>& p) { return sum(mul(p, w)); }, x), 1e-9);
}

TEST(Dense, IdentityAndHandProduct) {
  Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
  Tensor<double> zero(Shape{2}, 0.0);
  EXPECT_EQ(values(dense(Tensor<double>(Shape{2}, {3, -1}), eye, zero)), (std::vector<double>{3, -1}));
  Tensor<double> w(Shape{2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(dense(Tensor<double>(Shape{2}, {1, 1}), w, zero)), (std::vector<double>{3, 7}));
}

TEST(Dense, FeatureToEmbeddingExtent) {
  Rng rng(1);
  auto y = dense(random_tensor<float>(Shape{800}, rng), random_tensor<float>(Shape{128, 800}, rng),
                 Tensor<float>(Shape{128}, 0.f));
  EXPECT_EQ(y.shape(), (Shape{128}));
}

TEST(Dense, ShapeErrorNamesLayer) {
  try {
    dense(Tensor<float>(Shape{3}), Tensor<float>(Shape{4, 5}), Tensor<float>(Shape{4}), "relational/block0/dense");
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_EQ(e.where(), "relational/block0/dense");
  }
}

TEST(Conv2dSame, PreservesSpatialExtent) {
  Rng rng(2);
  auto y = conv2d_same(random_tensor<float>(Shape{84, 84, 3}, rng), random_tensor<float>(Shape{3, 3, 3, 32}, rng),
                       Tensor<float>(Shape{32}, 0.f));
  EXPECT_EQ(y.shape(), (Shape{84, 84, 32}));
}

TEST(Conv2dSame, CenterDeltaIsIdentity) {
  Rng rng(4);
  auto x = random_tensor<double>(Shape{5, 6, 2}, rng);
  Tensor<double> k(Shape{3, 3, 2, 1}, 0.0);
  k.data()[((1 * 3 + 1) * 2 + 1) * 1 + 0] = 1.0;  // centre tap, channel 1
  auto y = conv2d_same(x, k, Tensor<double>(Shape{1}, 0.0));
  for (int i = 0; i < 30; ++i) EXPECT_EQ(y.data()[i], x.data()[i * 2 + 1]);
}

TEST(Conv2dSame, OnesCenterPixelSumsNine) {
  auto y = conv2d_same(Tensor<double>(Shape{3, 3, 1}, 1.0), Tensor<double>(Shape{3, 3, 1, 1}, 1.0),
                       Tensor<double>(Shape{1}, 0.0));
  EXPECT_EQ(y.data()[4], 9.0);
  EXPECT_EQ(y.data()[0], 4.0);  // a corner sees a 2x2 neighbourhood
}

TEST(Conv2dSame, MatchesNestedLoopReference) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(9)), w = 1 + static_cast<int>(rng.below(9));
    const int c = 1 + static_cast<int>(rng.below(4)), f = 1 + static_cast<int>(rng.below(4));
    auto x = random_tensor<double>(Shape{2, h, w, c}, rng);
    auto k = random_tensor<double>(Shape{3, 3, c, f}, rng);
    auto b = random_tensor<double>(Shape{f}, rng);
    auto got = values(conv2d_same(x, k, b));
    auto want = testing::naive_conv2d_same(x, k, b);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2dSame, ChannelMismatch) {
  EXPECT_THROW(conv2d_same(Tensor<float>(Shape{4, 4, 3}), Tensor<float>(Shape{3, 3, 2, 8}), Tensor<float>(Shape{8})),
               Error);
}

TEST(Maxpool2, WindowMaximumAndOddEdge) {
  auto y = maxpool2(Tensor<double>(Shape{2, 2, 1}, {1, 2, 3, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.item(), 4.0);
  EXPECT_EQ(maxpool2(Tensor<float>(Shape{21, 21, 2})).shape(), (Shape{10, 10, 2}));
  auto c = maxpool2(Tensor<double>(Shape{4, 6, 3}, 0.7));
  for (double v : c.data()) EXPECT_EQ(v, 0.7);
}

TEST(Maxpool2, FeatureStageArithmetic) {
  Rng rng(6);
  Tensor<float> h = random_tensor<float>(Shape{84, 84, 3}, rng);
  std::vector<std::int64_t> sides;
  for (int i = 0; i < 4; ++i) {
    h = maxpool2(conv2d_same(h, random_tensor<float>(Shape{3, 3, h.dim(2), 32}, rng), Tensor<float>(Shape{32}, 0.f)));
    sides.push_back(h.dim(0));
  }
  EXPECT_EQ(sides, (std::vector<std::int64_t>{42, 21, 10, 5}));
  EXPECT_EQ(h.size(), 800u);
}

TEST(Maxpool2, TieGoesToFirstElement) {
  auto x = Tensor<double>::parameter(Shape{2, 2, 1}, {5, 5, 5, 5});
  backward(sum(maxpool2(x)));
  EXPECT_EQ(values(Tensor<double>(Shape{4}, std::vector<double>(x.grad().begin(), x.grad().end()))),
            (std::vector<double>{1, 0, 0, 0}));
}

TEST(Maxpool2, RejectsTinyInput) {
  EXPECT_THROW(maxpool2(Tensor<float>(Shape{1, 4, 2})), Error);
}

TEST(BatchNorm, ConstantBatchCentresToZero) {
  ParamStore<double> s;
  auto bn = BatchNormState<double>::create(s, "bn", 2);
  auto y = batchnorm(Tensor<double>(Shape{4, 2}, 3.0), bn, true);
  for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(BatchNorm, TwoValueBatchToUnitDeviations) {
  ParamStore<double> s;
  auto bn = BatchNormState<double>::create(s, "bn", 1, 0.99, 1e-12);
  auto y = batchnorm(Tensor<double>(Shape{2, 1}, {0.0, 2.0}), bn, true);
  EXPECT_NEAR(y.data()[0], -1.0, 1e-9);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-9);
  // running stats move 1% of the way from (0,1) toward the batch (1,1)
  EXPECT_NEAR(bn.running_mean.data()[0], 0.01, 1e-12);
  EXPECT_NEAR(bn.running_var.data()[0], 1.0, 1e-12);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentityWithinEpsilon) {
  ParamStore<double> s;
  auto bn = BatchNormState<double>::create(s, "bn", 3);
  Rng rng(8);
  auto x = random_tensor<double>(Shape{5, 3}, rng);
  auto y = batchnorm(x, bn, false);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i] / std::sqrt(1.0 + 1e-3), 1e-12);
}

TEST(BatchNorm, BatchOfOneIsLegal) {
  ParamStore<float> s;
  auto bn = BatchNormState<float>::create(s, "bn", 4);
  auto y = batchnorm(Tensor<float>(Shape{1, 4}, {1, 2, 3, 4}), bn, true);
  for (float v : y.data()) EXPECT_EQ(v, 0.f);
  for (float v : bn.running_var.data()) EXPECT_GE(v, 0.f);
}

TEST(BatchNorm, ChannelMismatch) {
  ParamStore<float> s;
  auto bn = BatchNormState<float>::create(s, "bn", 4);
  EXPECT_THROW(batchnorm(Tensor<float>(Shape{2, 3}), bn, true), Error);
}

TEST(Conv1dValid, LengthArithmetic) {
  Rng rng(9);
  auto k = random_tensor<float>(Shape{3, 4, 4}, rng);
  Tensor<float> b(Shape{4}, 0.f);
  auto once = conv1d_valid(random_tensor<float>(Shape{5, 4}, rng), k, b);
  EXPECT_EQ(once.shape(), (Shape{3, 4}));
  EXPECT_EQ(conv1d_valid(once, k, b).shape(), (Shape{1, 4}));
}

TEST(Conv1dValid, DeltaKernelShiftsInput) {
  Rng rng(10);
  auto x = random_tensor<double>(Shape{6, 2}, rng);
  Tensor<double> k(Shape{3, 2, 2}, 0.0);
  k.data()[(1 * 2 + 0) * 2 + 0] = 1.0;  // centre tap copies channel 0 -> 0
  k.data()[(1 * 2 + 1) * 2 + 1] = 1.0;  // and channel 1 -> 1
  auto y = conv1d_valid(x, k, Tensor<double>(Shape{2}, 0.0));
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 2; ++c) EXPECT_EQ(y.data()[i * 2 + c], x.data()[(i + 1) * 2 + c]);
}

TEST(Conv1dValid, WindowedSums) {
  auto y = conv1d_valid(Tensor<double>(Shape{5, 1}, 1.0), Tensor<double>(Shape{3, 1, 1}, 1.0), Tensor<double>(Shape{1}, 0.0));
  EXPECT_EQ(values(y), (std::vector<double>{3, 3, 3}));
}

TEST(Conv1dValid, MatchesNestedLoopReference) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int len = 3 + static_cast<int>(rng.below(6)), c = 1 + static_cast<int>(rng.below(5)),
              f = 1 + static_cast<int>(rng.below(5));
    auto x = random_tensor<double>(Shape{3, len, c}, rng);
    auto k = random_tensor<double>(Shape{3, c, f}, rng);
    auto b = random_tensor<double>(Shape{f}, rng);
    auto got = values(conv1d_valid(x, k, b));
    auto want = testing::naive_conv1d_valid(x, k, b);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv1dValid, RejectsShortSequence) {
  EXPECT_THROW(conv1d_valid(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{3, 3, 3}), Tensor<float>(Shape{3})), Error);
}

TEST(Concat, ExtentsAndValues) {
  EXPECT_EQ(concat(Tensor<float>(Shape{128}), Tensor<float>(Shape{800}), 0).shape(), (Shape{928}));
  EXPECT_EQ(values(concat(Tensor<double>(Shape{2}, {1, 2}), Tensor<double>(Shape{1}, {3}), 0)), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(concat(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{3, 3}), 1), Error);
  EXPECT_THROW(Tensor<float>(Shape{0}), Error);  // zero extents never exist
}

TEST(MeanOverSet, Examples) {
  Tensor<double> v(Shape{2}, {1, 3});
  Tensor<double> w(Shape{2}, {5, 7});
  std::vector<Tensor<double>> one{v};
  EXPECT_EQ(values(mean_over_set(std::span<const Tensor<double>>(one))), values(v));
  std::vector<Tensor<double>> sym{v, scale(v, -1.0)};
  EXPECT_EQ(values(mean_over_set(std::span<const Tensor<double>>(sym))), (std::vector<double>{0, 0}));
  std::vector<Tensor<double>> two{v, w};
  EXPECT_EQ(values(mean_over_set(std::span<const Tensor<double>>(two))), (std::vector<double>{3, 5}));
  EXPECT_THROW(mean_over_set(std::span<const Tensor<double>>()), Error);
}

TEST(SoftmaxCrossEntropy, Examples) {
  auto uniform = softmax_cross_entropy(Tensor<double>(Shape{5}, 0.3), 2);
  EXPECT_NEAR(uniform.loss.item(), 1.6094379124341003, 1e-12);
  auto saturated = softmax_cross_entropy(Tensor<double>(Shape{5}, {50, 0, 0, 0, 0}), 0);
  EXPECT_NEAR(saturated.loss.item(), 0.0, 1e-12);
  EXPECT_NEAR(saturated.probs.data()[0], 1.0, 1e-12);
  auto closed = softmax_cross_entropy(Tensor<double>(Shape{3}, {1, 2, 3}), 2);
  EXPECT_NEAR(closed.loss.item(), 0.40760596444438030, 1e-12);
  EXPECT_THROW(softmax_cross_entropy(Tensor<double>(Shape{3}), 3), Error);
  EXPECT_THROW(softmax_cross_entropy(Tensor<double>(Shape{3}), -1), Error);
}

TEST(SoftmaxCrossEntropy, ProbabilityVectorForLargeLogits) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto logits = random_tensor<float>(Shape{4, 7}, rng, -1e4, 1e4);
    const int targets[4] = {0, 1, 2, 3};
    auto out = softmax_cross_entropy(logits, std::span<const int>(targets));
    for (int r = 0; r < 4; ++r) {
      double total = 0.0;
      for (int j = 0; j < 7; ++j) {
        const float p = out.probs.data()[r * 7 + j];
        ASSERT_GE(p, 0.f);
        ASSERT_LE(p, 1.f);
        total += p;
      }
      ASSERT_NEAR(total, 1.0, 1e-6);
      ASSERT_TRUE(std::isfinite(out.losses[r]));
    }
  }
}

TEST(Backward, UnreachedParameterHasExactZeroGradient) {
  ParamStore<double> s;
  auto& used = s.add("used", Tensor<double>(Shape{3}, {1, 2, 3}));
  s.add("unused", Tensor<double>(Shape{2}, {4, 5}));
  auto grads = backward(sum(mul(used, used)), s);
  ASSERT_EQ(grads.size(), 2u);
  EXPECT_EQ(grads[0].second[2], 6.0);
  for (double g : grads[1].second) EXPECT_EQ(g, 0.0);
}

TEST(Backward, DenseSoftmaxBiasGradientIsProbsMinusOneHot) {
  ParamStore<double> s;
  Rng rng(13);
  auto& w = s.add("w", random_tensor<double>(Shape{4, 3}, rng));
  auto& b = s.add("b", random_tensor<double>(Shape{4}, rng));
  auto x = random_tensor<double>(Shape{3}, rng);
  auto out = softmax_cross_entropy(dense(x, w, b), 1);
  backward(out.loss, s);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(b.grad()[j], out.probs.data()[j] - (j == 1 ? 1.0 : 0.0), 1e-14);
}

TEST(Backward, ParameterUsedTwiceAccumulates) {
  ParamStore<double> s;
  Rng rng(14);
  auto& w = s.add("w", random_tensor<double>(Shape{3, 3}, rng));
  auto& b = s.add("b", random_tensor<double>(Shape{3}, rng));
  auto x = random_tensor<double>(Shape{3}, rng);
  auto fn = [&] { return sum(elu(dense(elu(dense(x, w, b)), w, b))); };
  auto report = grad_check_params(fn, s, 0, rng);
  EXPECT_LT(report.max_error, 1e-8) << report.worst;
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = Tensor<double>::parameter(Shape{2}, {1, 2});
  EXPECT_THROW(backward(elu(x)), Error);
}

TEST(Backward, ConstantsNeverReceiveGradient) {
  Tensor<double> c(Shape{2}, {1, 2});
  auto x = Tensor<double>::parameter(Shape{2}, {3, 4});
  EXPECT_FALSE(c.node_id().has_value());
  backward(sum(mul(c, x)));
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(PrimitiveGradients, RandomTrialsAgreeWithFiniteDifferences) {
  Rng rng(15);
  for (const auto& c : testing::primitive_gradient_cases()) {
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) worst = std::max(worst, c.run(rng));
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(Init, LecunVarianceForFeatureToEmbeddingLayer) {
  Rng rng(16);
  auto w = lecun_normal<double>(Shape{128, 800}, 800, rng);
  double mean = std::accumulate(w.data().begin(), w.data().end(), 0.0) / w.size();
  double var = 0.0;
  for (double v : w.data()) var += (v - mean) * (v - mean);
  var /= w.size();
  EXPECT_NEAR(var, 1.0 / 800, 0.2 / 800);
}

}  // namespace
}  // namespace maco
