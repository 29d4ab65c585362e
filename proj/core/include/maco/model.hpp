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
#include <unordered_map>
#include <vector>

#include "maco/ops.hpp"
#include "maco/param_store.hpp"
#include "maco/tensor.hpp"

namespace maco {

enum class Mode { kTrain, kEval };

inline constexpr int kConvBlocks = 4;
inline constexpr int kConvFilters = 32;

struct ModelConfig {
  int image_size = 84;
  int channels = 3;
  int feature_dim = 800;
  int embed_dim = 128;
  int relational_depth = 4;
  int conditioning_depth = 4;
  int ways = 5;
  int shots = 5;
  bool conditioning_enabled = true;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;

  /// Side length after the four conv/pool blocks (84 -> 42 -> 21 -> 10 -> 5).
  int pooled_size() const;
  /// Flattened conv output feeding the linear layer; 800 at image_size 84.
  std::int64_t flatten_dim() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// One K-way n-shot trial. support[k][i] is image i of class position k,
/// each [image_size, image_size, channels].
template <typename T>
struct Episode {
  std::vector<std::vector<Tensor<T>>> support;
  Tensor<T> query;
  int target = 0;

  int ways() const { return static_cast<int>(support.size()); }
  int shots() const { return support.empty() ? 0 : static_cast<int>(support[0].size()); }
};

/// Where an episode's images live in a feature matrix.
struct EpisodeLayout {
  std::vector<std::vector<std::int64_t>> support_rows;  // [K][n]
  std::int64_t query_row = 0;
  int target = 0;

  int ways() const { return static_cast<int>(support_rows.size()); }
};

struct ForwardOptions {
  /// When false the classifier's query input is replaced by zeros, leaving the
  /// conditioning stage as the only route from the query to the loss.
  bool classifier_query_path = true;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;         // [E,K]
  Tensor<T> probs;          // [E,K]
  Tensor<T> loss;           // {1}, mean over episodes
  std::vector<T> losses;    // per episode
  std::vector<int> predictions;
  Tensor<T> features;       // [N,feature_dim]
  Tensor<T> class_vectors;  // [E*K,embed_dim], relational stage output
  Tensor<T> conditioned;    // [E*K,embed_dim], conditioning stage output
};

/// Draws every weight of the network: LeCun normal for fully connected
/// layers, Glorot normal for convolutions, zero biases, unit BN scale.
template <typename T>
ParamStore<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
class MacoNet {
 public:
  MacoNet(ModelConfig config, std::uint64_t seed);
  MacoNet(ModelConfig config, ParamStore<T> params);

  MacoNet(const MacoNet&) = delete;
  MacoNet& operator=(const MacoNet&) = delete;
  MacoNet(MacoNet&&) = default;
  MacoNet& operator=(MacoNet&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// [B,H,W,C] -> [B,feature_dim]; a single [H,W,C] image gives [feature_dim].
  Tensor<T> feature_stage(const Tensor<T>& images, Mode mode);

  /// Pair network g on rows of xi and xj ([P,F] or [F]); first plus last block output.
  Tensor<T> relational_g(const Tensor<T>& xi, const Tensor<T>& xj, Mode mode);

  /// Average of g over the unordered pairs of one class; g(x,x) for a single image.
  /// Each pair is evaluated once with the lexicographically smaller feature
  /// row on the left, so the result is invariant to support order.
  Tensor<T> relational_stage(std::span<const Tensor<T>> class_features, Mode mode);

  /// Conditioned class vectors from class vectors [M,E] and query features [M,F].
  /// With conditioning disabled the query is ignored.
  Tensor<T> conditioning_stage(const Tensor<T>& class_vectors, const Tensor<T>& query_features, Mode mode);

  /// Logits from conditioned vectors [E,K,D] (or [K,D]) and query features [E,F] (or [F]).
  Tensor<T> classification_stage(const Tensor<T>& conditioned, const Tensor<T>& query_features, Mode mode);

  ForwardResult<T> forward(std::span<const Episode<T>> batch, Mode mode, const ForwardOptions& options = {});
  ForwardResult<T> forward(const Episode<T>& episode, Mode mode, const ForwardOptions& options = {});

  /// Everything after the feature stage, reading image features from rows of `features`.
  ForwardResult<T> forward_from_features(const Tensor<T>& features, std::span<const EpisodeLayout> layouts, Mode mode,
                                         const ForwardOptions& options = {});

  // Instrumentation.
  std::uint64_t pair_evaluations() const { return pair_evaluations_; }
  std::uint64_t images_featurized() const { return images_featurized_; }
  void reset_counters() { pair_evaluations_ = images_featurized_ = 0; }

 private:
  void bind_batchnorm();
  BatchNormState<T>& bn(const std::string& prefix);
  Tensor<T> fc_block(const Tensor<T>& x, const std::string& prefix, Mode mode);
  Tensor<T> fc_stack(const Tensor<T>& x, const std::string& stage, int depth, Mode mode);
  Tensor<T> pairs_to_classes(const Tensor<T>& features, const std::vector<std::int64_t>& left,
                             const std::vector<std::int64_t>& right, const std::vector<std::int64_t>& segment,
                             std::int64_t classes, Mode mode);

  ModelConfig config_;
  ParamStore<T> params_;
  std::unordered_map<std::string, BatchNormState<T>> bn_;
  std::uint64_t pair_evaluations_ = 0;
  std::uint64_t images_featurized_ = 0;
};

}  // namespace maco
