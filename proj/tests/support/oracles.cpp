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

#include "support/oracles.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <fstream>
#include <sstream>

#include <jpeglib.h>

#include "maco/grad_check.hpp"
#include "maco/ops.hpp"
#include "maco/param_store.hpp"

namespace maco::testing {
namespace {

using D = double;

int extent(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

// Loss = sum(out * w) with a fixed random w keeps every output coordinate in play.
Tensor<D> weighted(const Tensor<D>& out, Rng& rng) {
  return sum(mul(out, random_tensor<D>(out.shape(), rng)));
}

// Values spaced at least 0.05 apart inside every 2x2 window so a central
// difference never flips the argmax.
Tensor<D> pool_friendly(Shape shape, Rng& rng) {
  Tensor<D> t(shape);
  std::vector<D> levels(t.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.05 * static_cast<D>(i);
  rng.shuffle(std::span<D>(levels));
  std::copy(levels.begin(), levels.end(), t.data().begin());
  return t;
}

double check(ParamStore<D>& store, const std::function<Tensor<D>()>& loss, Rng& rng) {
  return grad_check_params(loss, store, 0, rng).max_error;
}

}  // namespace

std::vector<PrimitiveCase> primitive_gradient_cases() {
  std::vector<PrimitiveCase> cases;

  cases.push_back({"elu", [](Rng& rng) {
    ParamStore<D> s;
    auto& x = s.add("x", random_tensor<D>(Shape{extent(rng, 2, 6), extent(rng, 1, 5)}, rng, -3, 3));
    Rng wr = rng.fork(1);
    auto w = random_tensor<D>(x.shape(), wr);
    return check(s, [&] { return sum(mul(elu(x), w)); }, rng);
  }});

  cases.push_back({"dense", [](Rng& rng) {
    ParamStore<D> s;
    const int n = extent(rng, 1, 4), in = extent(rng, 1, 6), out = extent(rng, 1, 6);
    auto& x = s.add("x", random_tensor<D>(Shape{n, in}, rng));
    auto& w = s.add("w", random_tensor<D>(Shape{out, in}, rng));
    auto& b = s.add("b", random_tensor<D>(Shape{out}, rng));
    auto m = random_tensor<D>(Shape{n, out}, rng);
    return check(s, [&] { return sum(mul(dense(x, w, b), m)); }, rng);
  }});

  cases.push_back({"conv2d_same", [](Rng& rng) {
    ParamStore<D> s;
    const int b = extent(rng, 1, 2), h = extent(rng, 1, 5), w = extent(rng, 1, 5), c = extent(rng, 1, 3),
              f = extent(rng, 1, 3);
    auto& x = s.add("x", random_tensor<D>(Shape{b, h, w, c}, rng));
    auto& k = s.add("k", random_tensor<D>(Shape{3, 3, c, f}, rng));
    auto& bias = s.add("bias", random_tensor<D>(Shape{f}, rng));
    auto m = random_tensor<D>(Shape{b, h, w, f}, rng);
    return check(s, [&] { return sum(mul(conv2d_same(x, k, bias), m)); }, rng);
  }});

  cases.push_back({"maxpool2", [](Rng& rng) {
    ParamStore<D> s;
    const int b = extent(rng, 1, 2), h = extent(rng, 2, 7), w = extent(rng, 2, 7), c = extent(rng, 1, 3);
    auto& x = s.add("x", pool_friendly(Shape{b, h, w, c}, rng));
    auto m = random_tensor<D>(Shape{b, h / 2, w / 2, c}, rng);
    return check(s, [&] { return sum(mul(maxpool2(x), m)); }, rng);
  }});

  for (bool training : {true, false}) {
    cases.push_back({training ? "batchnorm_train" : "batchnorm_eval", [training](Rng& rng) {
      ParamStore<D> s;
      const int n = extent(rng, 2, 6), c = extent(rng, 1, 4);
      auto& x = s.add("x", random_tensor<D>(Shape{n, 2, c}, rng, -2, 2));
      auto bn = BatchNormState<D>::create(s, "bn", c);
      std::copy_n(random_tensor<D>(Shape{c}, rng, 0.5, 1.5).data().begin(), c, bn.gamma.data().begin());
      std::copy_n(random_tensor<D>(Shape{c}, rng).data().begin(), c, bn.beta.data().begin());
      std::copy_n(random_tensor<D>(Shape{c}, rng).data().begin(), c, bn.running_mean.data().begin());
      std::copy_n(random_tensor<D>(Shape{c}, rng, 0.5, 2).data().begin(), c, bn.running_var.data().begin());
      auto m = random_tensor<D>(x.shape(), rng);
      return check(s, [&] { return sum(mul(batchnorm(x, bn, training), m)); }, rng);
    }});
  }

  cases.push_back({"conv1d_valid", [](Rng& rng) {
    ParamStore<D> s;
    const int b = extent(rng, 1, 3), len = extent(rng, 3, 7), c = extent(rng, 1, 4), f = extent(rng, 1, 4);
    auto& x = s.add("x", random_tensor<D>(Shape{b, len, c}, rng));
    auto& k = s.add("k", random_tensor<D>(Shape{3, c, f}, rng));
    auto& bias = s.add("bias", random_tensor<D>(Shape{f}, rng));
    auto m = random_tensor<D>(Shape{b, len - 2, f}, rng);
    return check(s, [&] { return sum(mul(conv1d_valid(x, k, bias), m)); }, rng);
  }});

  cases.push_back({"concat", [](Rng& rng) {
    ParamStore<D> s;
    const int rows = extent(rng, 1, 4);
    auto& a = s.add("a", random_tensor<D>(Shape{rows, extent(rng, 1, 5)}, rng));
    auto& b = s.add("b", random_tensor<D>(Shape{rows, extent(rng, 1, 5)}, rng));
    auto m = random_tensor<D>(Shape{rows, a.dim(1) + b.dim(1)}, rng);
    return check(s, [&] { return sum(mul(concat(a, b, 1), m)); }, rng);
  }});

  cases.push_back({"mean_over_set", [](Rng& rng) {
    ParamStore<D> s;
    const int members = extent(rng, 1, 5), width = extent(rng, 1, 6);
    std::vector<Tensor<D>> xs;
    for (int i = 0; i < members; ++i) xs.push_back(s.add("x" + std::to_string(i), random_tensor<D>(Shape{width}, rng)));
    auto m = random_tensor<D>(Shape{width}, rng);
    return check(s, [&] { return sum(mul(mean_over_set(std::span<const Tensor<D>>(xs)), m)); }, rng);
  }});

  cases.push_back({"softmax_cross_entropy", [](Rng& rng) {
    ParamStore<D> s;
    const int rows = extent(rng, 1, 4), k = extent(rng, 2, 7);
    auto& logits = s.add("logits", random_tensor<D>(Shape{rows, k}, rng, -4, 4));
    std::vector<int> targets(rows);
    for (auto& t : targets) t = static_cast<int>(rng.below(k));
    return check(s, [&] { return softmax_cross_entropy(logits, std::span<const int>(targets)).loss; }, rng);
  }});

  cases.push_back({"gather_segment_mean", [](Rng& rng) {
    ParamStore<D> s;
    const int n = extent(rng, 2, 5), width = extent(rng, 1, 4), segments = extent(rng, 1, 3);
    auto& x = s.add("x", random_tensor<D>(Shape{n, width}, rng));
    std::vector<std::int64_t> rows, seg;
    for (int g = 0; g < segments; ++g) {
      const int members = extent(rng, 1, 3);
      for (int i = 0; i < members; ++i) {
        rows.push_back(static_cast<std::int64_t>(rng.below(n)));
        seg.push_back(g);
      }
    }
    auto m = random_tensor<D>(Shape{segments, width}, rng);
    return check(s, [&] {
      return sum(mul(segment_mean(gather_rows(x, std::span<const std::int64_t>(rows)),
                                  std::span<const std::int64_t>(seg), segments), m));
    }, rng);
  }});

  cases.push_back({"stack_reshape_mean_axis1", [](Rng& rng) {
    ParamStore<D> s;
    const int members = extent(rng, 1, 4), len = extent(rng, 1, 4), width = extent(rng, 1, 3);
    std::vector<Tensor<D>> xs;
    for (int i = 0; i < members; ++i) xs.push_back(s.add("x" + std::to_string(i), random_tensor<D>(Shape{len * width}, rng)));
    auto m = random_tensor<D>(Shape{members, width}, rng);
    return check(s, [&] {
      auto st = reshape(stack(std::span<const Tensor<D>>(xs)), Shape{members, len, width});
      return sum(mul(mean_axis1(st), m));
    }, rng);
  }});

  cases.push_back({"add_scale", [](Rng& rng) {
    ParamStore<D> s;
    const Shape shape{extent(rng, 1, 4), extent(rng, 1, 4)};
    auto& a = s.add("a", random_tensor<D>(shape, rng));
    auto& b = s.add("b", random_tensor<D>(shape, rng));
    const D factor = rng.uniform(-2, 2);
    Rng wr = rng.fork(7);
    return check(s, [&, wr]() mutable {
      Rng local = wr;
      return weighted(scale(add(a, mul(a, b)), factor), local);
    }, rng);
  }});

  return cases;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_grey_jpeg(const std::filesystem::path& path, int height, int width, int level) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open " + path.string());
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = 1;
  cinfo.in_color_space = JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(width), static_cast<JSAMPLE>(level));
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW r = row.data();
    jpeg_write_scanlines(&cinfo, &r, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

}  // namespace maco::testing
