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
#include "maco/episodes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace maco {

std::size_t Dataset::total_images() const {
  std::size_t n = 0;
  for (const auto& c : images) n += c.size();
  return n;
}

std::size_t Dataset::class_size(int class_id) const {
  if (class_id < 0 || class_id >= num_classes()) {
    fail(ErrorKind::kRange, "Dataset", "class " + std::to_string(class_id) + " of " + std::to_string(num_classes()));
  }
  return images[static_cast<std::size_t>(class_id)].size();
}

const Tensor<float>& Dataset::image(int class_id, int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= class_size(class_id)) {
    fail(ErrorKind::kRange, "Dataset", "image " + std::to_string(index) + " of class " + std::to_string(class_id));
  }
  return images[static_cast<std::size_t>(class_id)][static_cast<std::size_t>(index)];
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorKind::kFormat, "split", "unknown split '" + name + "' (expected train, val or test)");
}

const std::vector<int>& ClassSplits::classes(Split split) const {
  switch (split) {
    case Split::kTrain:
      return train;
    case Split::kVal:
      return val;
    case Split::kTest:
      break;
  }
  return test;
}

ClassSplits build_class_splits(std::span<const int> class_ids, SplitCounts counts, std::uint64_t seed) {
  if (counts.train < 0 || counts.val < 0 || counts.test < 0) {
    fail(ErrorKind::kConfig, "build_class_splits", "split counts must be non-negative");
  }
  if (static_cast<std::size_t>(counts.total()) != class_ids.size()) {
    fail(ErrorKind::kConfig, "build_class_splits",
         "counts " + std::to_string(counts.train) + "+" + std::to_string(counts.val) + "+" +
             std::to_string(counts.test) + " do not sum to " + std::to_string(class_ids.size()) + " classes");
  }
  if (std::unordered_set<int>(class_ids.begin(), class_ids.end()).size() != class_ids.size()) {
    fail(ErrorKind::kData, "build_class_splits", "class ids are not distinct");
  }
  std::vector<int> order(class_ids.begin(), class_ids.end());
  std::sort(order.begin(), order.end());
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));

  ClassSplits out;
  out.seed = seed;
  auto take = [&](std::vector<int>& dst, int from, int n) {
    dst.assign(order.begin() + from, order.begin() + from + n);
    std::sort(dst.begin(), dst.end());
  };
  take(out.train, 0, counts.train);
  take(out.val, counts.train, counts.val);
  take(out.test, counts.train + counts.val, counts.test);
  return out;
}

void AugmentPolicy::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, "AugmentPolicy." + field, why); };
  if (!(rotation_max_degrees >= 0.0)) bad("rotation_max_degrees", "must be non-negative");
  if (!(translate_max_fraction >= 0.0)) bad("translate_max_fraction", "must be non-negative");
  if (!(zoom_low > 0.0) || !(zoom_low <= zoom_high)) bad("zoom_range", "needs 0 < low <= high");
  if (!(hflip_probability >= 0.0 && hflip_probability <= 1.0)) bad("hflip_probability", "must lie in [0,1]");
}

AffineParams draw_affine(const AugmentPolicy& policy, int image_size, Rng& rng) {
  AffineParams p;
  const double shift = policy.translate_max_fraction * image_size;
  p.angle_degrees = rng.uniform(-policy.rotation_max_degrees, policy.rotation_max_degrees);
  p.shift_x = rng.uniform(-shift, shift);
  p.shift_y = rng.uniform(-shift, shift);
  p.zoom = rng.uniform(policy.zoom_low, policy.zoom_high);
  p.flip = rng.bernoulli(policy.hflip_probability);
  return p;
}

Tensor<float> apply_affine(const Tensor<float>& image, const AffineParams& params) {
  if (image.rank() != 3) fail(ErrorKind::kShape, "augment", "expected [H,W,C], got " + shape_str(image.shape()));
  if (!(params.zoom > 0.0)) fail(ErrorKind::kConfig, "augment", "zoom must be positive");
  const std::int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  const double rad = params.angle_degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const float* src = image.data().data();
  Buffer<float> out(image.size());

  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double u0 = (static_cast<double>(x) - cx - params.shift_x) / params.zoom;
      const double v0 = (static_cast<double>(y) - cy - params.shift_y) / params.zoom;
      double u = cs * u0 - sn * v0;
      const double v = sn * u0 + cs * v0;
      if (params.flip) u = -u;
      const double sx = u + cx, sy = v + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
      float* dst = out.data() + (y * w + x) * c;
      std::fill(dst, dst + c, 0.0f);
      const std::array<std::int64_t, 2> ys{y0, y0 + 1}, xs{x0, x0 + 1};
      const std::array<double, 2> wy{1.0 - ay, ay}, wx{1.0 - ax, ax};
      for (int i = 0; i < 2; ++i) {
        if (ys[i] < 0 || ys[i] >= h || wy[i] == 0.0) continue;
        for (int j = 0; j < 2; ++j) {
          if (xs[j] < 0 || xs[j] >= w || wx[j] == 0.0) continue;
          const double wt = wy[i] * wx[j];
          const float* s = src + (ys[i] * w + xs[j]) * c;
          for (std::int64_t k = 0; k < c; ++k) dst[k] += static_cast<float>(wt * s[k]);
        }
      }
      for (std::int64_t k = 0; k < c; ++k) dst[k] = std::clamp(dst[k], 0.0f, 1.0f);
    }
  }
  return Tensor<float>(image.shape(), std::move(out));
}

Tensor<float> augment_image(const Tensor<float>& image, const AugmentPolicy& policy, Rng& rng) {
  if (!policy.enabled) return image.clone();
  policy.validate();
  return apply_affine(image, draw_affine(policy, static_cast<int>(image.dim(0)), rng));
}

EpisodeSpec sample_episode_spec(const Dataset& data, std::span<const int> split_classes, int ways, int shots,
                                Rng& rng) {
  if (ways < 1 || shots < 1) fail(ErrorKind::kConfig, "sample_episode", "ways and shots must be positive");
  if (split_classes.size() < static_cast<std::size_t>(ways)) {
    fail(ErrorKind::kData, "sample_episode", "split has " + std::to_string(split_classes.size()) +
                                                 " classes, episode needs " + std::to_string(ways));
  }
  // Partial Fisher-Yates: the first K entries are distinct classes in random order.
  std::vector<int> pool(split_classes.begin(), split_classes.end());
  for (int k = 0; k < ways; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(pool.size() - static_cast<std::size_t>(k)));
    std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
  }
  EpisodeSpec spec;
  spec.classes.assign(pool.begin(), pool.begin() + ways);
  spec.target = static_cast<int>(rng.below(static_cast<std::uint64_t>(ways)));
  for (int k = 0; k < ways; ++k) {
    const int cls = spec.classes[static_cast<std::size_t>(k)];
    const bool is_target = k == spec.target;
    const std::size_t need = static_cast<std::size_t>(shots) + (is_target ? 1 : 0);
    const std::size_t have = data.class_size(cls);
    if (have < static_cast<std::size_t>(shots) + 1) {
      fail(ErrorKind::kData, "sample_episode", "class " + std::to_string(cls) + " has " + std::to_string(have) +
                                                   " images, needs at least " + std::to_string(shots + 1));
    }
    std::vector<int> idx(have);
    for (std::size_t i = 0; i < have; ++i) idx[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < need; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(have - i))]);
    spec.support.emplace_back(idx.begin(), idx.begin() + shots);
    if (is_target) spec.query_image = idx[static_cast<std::size_t>(shots)];
  }
  return spec;
}

Episode<float> materialize(const Dataset& data, const EpisodeSpec& spec, const AugmentPolicy& policy, bool augment,
                           Rng& rng) {
  auto get = [&](int cls, int index) {
    const Tensor<float>& img = data.image(cls, index);
    return augment ? augment_image(img, policy, rng) : img;
  };
  Episode<float> ep;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    auto& cls = ep.support.emplace_back();
    for (int index : spec.support[k]) cls.push_back(get(spec.classes[k], index));
  }
  ep.query = get(spec.classes[static_cast<std::size_t>(spec.target)], spec.query_image);
  ep.target = spec.target;
  return ep;
}

Episode<float> sample_episode(const Dataset& data, std::span<const int> split_classes, Split split, int ways,
                              int shots, const AugmentPolicy& policy, Rng& rng) {
  const EpisodeSpec spec = sample_episode_spec(data, split_classes, ways, shots, rng);
  return materialize(data, spec, policy, split == Split::kTrain && policy.enabled, rng);
}

EpisodeSampler::EpisodeSampler(const Dataset& data, std::vector<int> classes, Split split, int ways, int shots,
                               AugmentPolicy policy, std::uint64_t seed)
    : data_(&data),
      classes_(std::move(classes)),
      split_(split),
      ways_(ways),
      shots_(shots),
      policy_(policy),
      rng_(seed) {
  policy_.validate();
  for (int c : classes_) data.class_size(c);  // range check
}

namespace {

enum class Glyph { kCircle, kTriangle, kBar, kCross };
enum class Fill { kSolid, kStripes, kChecker };

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = (h - std::floor(h)) * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

// u, v in glyph units: the glyph spans roughly [-1,1]^2.
bool inside(Glyph g, double u, double v) {
  switch (g) {
    case Glyph::kCircle:
      return u * u + v * v <= 1.0;
    case Glyph::kTriangle: {
      // Upright equilateral triangle inscribed in the unit circle.
      const double s3 = std::sqrt(3.0);
      return v <= 0.5 && s3 * u - v <= 1.0 && -s3 * u - v <= 1.0;
    }
    case Glyph::kBar:
      return std::abs(u) <= 1.0 && std::abs(v) <= 0.32;
    case Glyph::kCross:
      return (std::abs(u) <= 1.0 && std::abs(v) <= 0.28) || (std::abs(u) <= 0.28 && std::abs(v) <= 1.0);
  }
  return false;
}

bool lit(Fill f, double u, double v) {
  switch (f) {
    case Fill::kSolid:
      return true;
    case Fill::kStripes:
      return std::sin(u * 3.0 * std::numbers::pi) > -0.2;
    case Fill::kChecker:
      return (static_cast<int>(std::floor(u * 2.5)) + static_cast<int>(std::floor(v * 2.5))) % 2 == 0;
  }
  return true;
}

}  // namespace

Dataset synth_dataset_generate(int num_classes, int images_per_class, int image_size, std::uint64_t seed) {
  if (num_classes < 1 || images_per_class < 1) fail(ErrorKind::kConfig, "synth", "class and image counts must be positive");
  if (image_size < 8) fail(ErrorKind::kConfig, "synth", "image_size must be at least 8");
  Dataset data;
  data.image_size = image_size;
  data.channels = 3;
  const double hue0 = Rng(seed).uniform();
  const double s = image_size;
  for (int c = 0; c < num_classes; ++c) {
    data.class_names.push_back("synth_" + std::string(c < 10 ? "00" : c < 100 ? "0" : "") + std::to_string(c));
    // Coprime moduli give every class in a block of 60 its own (glyph, fill, hue) triple.
    const auto glyph = static_cast<Glyph>(c % 4);
    const auto fill = static_cast<Fill>(c % 3);
    const double block = 0.61803398874989485 * (c / 60);
    const double hue = hue0 + 0.2 * (c % 5) + 0.1 * (block - std::floor(block));
    auto& bucket = data.images.emplace_back();
    for (int i = 0; i < images_per_class; ++i) {
      Rng rng(seed ^ Rng::mix((static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint64_t>(i)));
      const double radius = s * rng.uniform(0.26, 0.34);
      const double ox = 0.5 * (s - 1) + s * rng.uniform(-0.04, 0.04);
      const double oy = 0.5 * (s - 1) + s * rng.uniform(-0.04, 0.04);
      const double angle = rng.uniform(-0.25, 0.25);
      const double cs = std::cos(angle), sn = std::sin(angle);
      const auto fg = hsv_to_rgb(hue + rng.uniform(-0.02, 0.02), rng.uniform(0.65, 0.9), rng.uniform(0.75, 0.95));
      const auto shade = hsv_to_rgb(hue, 0.4, 0.35);
      const double bg = rng.uniform(0.05, 0.2);
      Buffer<float> px(static_cast<std::size_t>(image_size) * image_size * 3);
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          const double dx = (x - ox) / radius, dy = (y - oy) / radius;
          const double u = cs * dx + sn * dy, v = -sn * dx + cs * dy;
          std::array<double, 3> rgb{bg, bg, bg};
          if (inside(glyph, u, v)) rgb = lit(fill, u, v) ? fg : shade;
          float* dst = px.data() + (static_cast<std::size_t>(y) * image_size + x) * 3;
          for (int k = 0; k < 3; ++k) dst[k] = static_cast<float>(std::clamp(rgb[k] + rng.normal(0.0, 0.03), 0.0, 1.0));
        }
      }
      bucket.emplace_back(Shape{image_size, image_size, 3}, std::move(px));
    }
  }
  return data;
}

}  // namespace maco
