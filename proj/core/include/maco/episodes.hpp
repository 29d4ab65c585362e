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
#include <string>
#include <vector>

#include "maco/model.hpp"
#include "maco/random.hpp"
#include "maco/tensor.hpp"

namespace maco {

/// Images grouped by class; every image is [image_size, image_size, channels]
/// with values in [0,1]. Class ids are indices into `class_names`.
struct Dataset {
  int image_size = 0;
  int channels = 3;
  std::vector<std::string> class_names;
  std::vector<std::vector<Tensor<float>>> images;  // [class][image]

  int num_classes() const { return static_cast<int>(images.size()); }
  std::size_t total_images() const;
  std::size_t class_size(int class_id) const;
  const Tensor<float>& image(int class_id, int index) const;
};

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split split);
Split parse_split(const std::string& name);

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;

  int total() const { return train + val + test; }
  bool operator==(const SplitCounts&) const = default;
};

struct ClassSplits {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::uint64_t seed = 0;

  const std::vector<int>& classes(Split split) const;
  bool operator==(const ClassSplits&) const = default;
};

/// Uniform random partition of `class_ids` into the three counts. The ids
/// must be distinct and the counts must sum to their number.
ClassSplits build_class_splits(std::span<const int> class_ids, SplitCounts counts, std::uint64_t seed);

struct AugmentPolicy {
  double rotation_max_degrees = 20.0;
  double translate_max_fraction = 0.1;
  double zoom_low = 0.9;
  double zoom_high = 1.1;
  double hflip_probability = 0.5;
  bool enabled = true;

  void validate() const;
  bool operator==(const AugmentPolicy&) const = default;
};

/// One concrete similarity transform about the image centre. Output pixel p
/// samples the source at flip(R(angle) (p - c - t) / zoom) + c, R acting on
/// (x, y) pixel coordinates with y pointing down.
struct AffineParams {
  double angle_degrees = 0.0;  // counter-clockwise as displayed (y down)
  double shift_x = 0.0;        // pixels
  double shift_y = 0.0;
  double zoom = 1.0;
  bool flip = false;
};

AffineParams draw_affine(const AugmentPolicy& policy, int image_size, Rng& rng);

/// Bilinear resampling with zero fill outside the source, clipped to [0,1].
Tensor<float> apply_affine(const Tensor<float>& image, const AffineParams& params);

/// Random rotation, translation, zoom and horizontal flip drawn from
/// `policy`. A disabled policy returns an unchanged copy and draws nothing.
Tensor<float> augment_image(const Tensor<float>& image, const AugmentPolicy& policy, Rng& rng);

/// Dataset indices of one trial, before any image is touched.
struct EpisodeSpec {
  std::vector<int> classes;               // dataset class id per position
  std::vector<std::vector<int>> support;  // [K][n] image indices within each class
  int query_image = 0;                    // index within classes[target]
  int target = 0;
};

/// Draws K distinct classes in random position order, n support images per
/// class without replacement, a uniform target position and a query from the
/// target class that is not among its support images.
EpisodeSpec sample_episode_spec(const Dataset& data, std::span<const int> split_classes, int ways, int shots,
                                Rng& rng);

/// Gathers the images of `spec`, augmenting each one when `augment` is set.
Episode<float> materialize(const Dataset& data, const EpisodeSpec& spec, const AugmentPolicy& policy, bool augment,
                           Rng& rng);

/// Spec plus materialization; augmentation applies to the training split only.
Episode<float> sample_episode(const Dataset& data, std::span<const int> split_classes, Split split, int ways,
                              int shots, const AugmentPolicy& policy, Rng& rng);

/// Stream of episodes from one split. Copying a sampler copies its RNG
/// state, so a copy replays the same episodes.
class EpisodeSampler {
 public:
  EpisodeSampler(const Dataset& data, std::vector<int> classes, Split split, int ways, int shots,
                 AugmentPolicy policy, std::uint64_t seed);

  EpisodeSpec next_spec() { return sample_episode_spec(*data_, classes_, ways_, shots_, rng_); }
  Episode<float> next() { return sample_episode(*data_, classes_, split_, ways_, shots_, policy_, rng_); }

  const Dataset& data() const { return *data_; }
  const std::vector<int>& classes() const { return classes_; }
  Split split() const { return split_; }
  int ways() const { return ways_; }
  int shots() const { return shots_; }
  Rng& rng() { return rng_; }

 private:
  const Dataset* data_;
  std::vector<int> classes_;
  Split split_;
  int ways_;
  int shots_;
  AugmentPolicy policy_;
  Rng rng_;
};

/// Procedural classes distinguished by shape (circle, triangle, bar, cross),
/// hue and fill pattern, with per-image jitter of position, size, angle,
/// colour and noise. Deterministic under `seed`.
Dataset synth_dataset_generate(int num_classes, int images_per_class, int image_size, std::uint64_t seed);

}  // namespace maco
