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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maco/episodes.hpp"
#include "maco/model.hpp"
#include "maco/param_store.hpp"

namespace maco {

struct NadamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const NadamConfig&) const = default;
};

/// First and second moments per trainable parameter, in store order.
template <typename T>
struct NadamState {
  NadamConfig hyper;
  std::int64_t step = 0;
  std::vector<std::string> paths;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static NadamState create(const ParamStore<T>& params, NadamConfig hyper = {});
};

/// One Nesterov-accelerated Adam update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   m_bar = b1 m/(1-b1^t) + (1-b1) g/(1-b1^t),
///   theta <- theta - lr m_bar / (sqrt(v/(1-b2^t)) + eps).
/// `grads` must name every trainable parameter of `params`, in store order.
template <typename T>
void nadam_step(ParamStore<T>& params, const GradientMap<T>& grads, NadamState<T>& state);

struct MetricsRecord {
  int epoch = 0;
  Split split = Split::kTrain;
  double loss = 0.0;      // mean episode loss
  double accuracy = 0.0;  // correct / episodes
  std::int64_t episodes = 0;
  std::int64_t correct = 0;

  bool operator==(const MetricsRecord&) const = default;
};

/// ceil(episodes / batch_size): the last partial batch still takes a step.
std::int64_t steps_per_epoch(std::int64_t episodes, int batch_size);

/// Trains on `episodes` episodes in minibatches, one optimizer step per batch,
/// batch norm in training mode. The batch loss is the mean episode loss.
MetricsRecord train_epoch(MacoNet<float>& model, EpisodeSampler& sampler, std::int64_t episodes, int batch_size,
                          NadamState<float>& optimizer, int epoch = 0);

/// Accuracy of argmax predictions over `episodes` episodes in evaluation
/// mode. Image features are computed once per image of the sampler's split
/// and reused across episodes.
MetricsRecord evaluate(MacoNet<float>& model, EpisodeSampler& sampler, std::int64_t episodes, int epoch = 0);

struct Schedule {
  int epochs = 1;
  std::int64_t episodes_per_epoch = 2000;
  int batch_size = 8;
  std::int64_t val_episodes = 500;
  NadamConfig optimizer;

  void validate() const;
  bool operator==(const Schedule&) const = default;
};

struct SeedRecord {
  std::uint64_t run = 0;    // model init, training and validation streams
  std::uint64_t split = 0;  // class partition
  std::uint64_t data = 0;   // synthetic generator (0 for datasets on disk)

  bool operator==(const SeedRecord&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  AugmentPolicy augment;
  SeedRecord seeds;
  int epoch = 0;
  double val_accuracy = 0.0;
  ParamStore<float> params;  // includes batch-norm running statistics
  NadamState<float> optimizer;
  std::string run_config;  // JSON of the producing run (dataset and splits), may be empty
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container: 8-byte magic "MACOCKPT", u32 format version, u64 metadata
/// length, UTF-8 JSON metadata, then raw little-endian float32 tensor data at
/// the offsets listed in the metadata's tensor directory.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

struct FitResult {
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_val_accuracy = 0.0;
  std::vector<MetricsRecord> history;  // train then val record per epoch
};

/// Epoch driver with injectable stages. `train` and `validate` produce the
/// records of an epoch; `on_best` fires whenever validation accuracy exceeds
/// every earlier epoch (ties keep the earliest). `keep_going`, if set, is
/// consulted after each epoch.
FitResult fit_loop(int epochs, const std::function<MetricsRecord(int)>& train,
                   const std::function<MetricsRecord(int)>& validate, const std::function<void(int, double)>& on_best,
                   const std::function<bool(const FitResult&)>& keep_going = {});

struct TrainingRun {
  Checkpoint best;
  FitResult result;
};

/// Full training run: builds the model from `seeds.run`, trains on the train
/// split with augmentation, validates each epoch on a fixed set of val
/// episodes and keeps the parameters of the best validation epoch.
TrainingRun fit(const ModelConfig& config, const Dataset& data, const ClassSplits& splits, const AugmentPolicy& augment,
                const Schedule& schedule, const SeedRecord& seeds,
                const std::function<bool(const FitResult&)>& keep_going = {});

/// Stream seeds derived from the run seed.
std::uint64_t init_seed(std::uint64_t run_seed);
std::uint64_t train_stream_seed(std::uint64_t run_seed);
std::uint64_t val_stream_seed(std::uint64_t run_seed);
std::uint64_t test_stream_seed(std::uint64_t run_seed);

}  // namespace maco
