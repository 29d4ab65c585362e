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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "maco/episodes.hpp"
#include "maco/model.hpp"
#include "maco/training.hpp"

namespace maco {

struct DatasetSource {
  enum class Kind { kSynthetic, kDirectory };
  Kind kind = Kind::kSynthetic;
  std::filesystem::path directory;  // kDirectory: one subdirectory per class
  int synth_classes = 30;
  int synth_per_class = 30;
  std::uint64_t synth_seed = 0;

  bool operator==(const DatasetSource&) const = default;
};

/// Everything a run needs. JSON schema (all keys optional, defaults shown by
/// `dump_run_config(RunConfig{})`):
///   dataset: {type: "synthetic", classes, per_class, seed} | {type: "directory", path}
///   splits: {counts: [train, val, test], seed, manifest: path}
///   ways, shots, model: {...ModelConfig fields}, augment: {...}, schedule: {...},
///   test_episodes, output_dir, seed
struct RunConfig {
  DatasetSource dataset;
  SplitCounts split_counts{20, 5, 5};
  std::uint64_t split_seed = 0;
  std::optional<std::filesystem::path> manifest;  // overrides split_counts when set
  ModelConfig model;                              // ways and shots live here
  AugmentPolicy augment;
  Schedule schedule;
  std::int64_t test_episodes = 1000;
  std::filesystem::path output_dir = "maco-run";
  std::uint64_t seed = 0;

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

/// Decoded image, interleaved RGB in [0,1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
};

/// PNG (any bit depth, palette, grey or alpha) or baseline JPEG, chosen by
/// file signature. Grey is replicated to three channels; alpha is dropped.
RgbImage decode_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor<float>& image);

/// Bilinear resize with half-pixel centres and edge clamping. `src` is
/// [h, w, c] interleaved.
std::vector<float> resize_bilinear(std::span<const float> src, int h, int w, int c, int out_h, int out_w);

struct IngestReport {
  Dataset data;
  std::size_t skipped = 0;
  std::vector<std::string> skipped_files;
};

/// Loads root/<class>/<image> for every subdirectory, classes and files in
/// lexicographic order, resized to image_size. Undecodable files are
/// reported to `warnings` (if given) and skipped; a class left empty is an error.
IngestReport ingest_dataset(const std::filesystem::path& root, int image_size, std::ostream* warnings = nullptr);

/// Lines `class_id,split`, class ids being class names.
void write_split_manifest(const std::filesystem::path& path, const ClassSplits& splits,
                          const std::vector<std::string>& class_names);
ClassSplits read_split_manifest(const std::filesystem::path& path, const std::vector<std::string>& class_names);

/// Header `epoch,split,loss,accuracy,episodes`, six fractional digits.
std::string format_metrics_csv(const std::vector<MetricsRecord>& history);
void emit_metrics_csv(const std::vector<MetricsRecord>& history, const std::filesystem::path& path);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

/// z * sqrt(p (1 - p) / n) with z = 1.96.
double binomial_half_width(double accuracy, std::int64_t episodes);

struct AccuracyRow {
  std::string variant;
  double one_shot = 0.0;
  double one_shot_half_width = 0.0;
  double five_shot = 0.0;
  double five_shot_half_width = 0.0;
  std::int64_t episodes = 0;  // per shot setting
};

std::string format_accuracy_table(const std::vector<AccuracyRow>& rows);
std::string format_accuracy_csv(const std::vector<AccuracyRow>& rows);

/// Materializes the dataset and class splits described by `config`.
struct PreparedData {
  Dataset data;
  ClassSplits splits;
};
PreparedData prepare_data(const RunConfig& config, std::ostream* warnings = nullptr);

/// Trains and writes best.ckpt, metrics.csv and config.json (the resolved
/// config) into config.output_dir. Progress goes to `log`.
TrainingRun run_train(const RunConfig& config, std::ostream& log, const std::function<bool(const FitResult&)>& keep_going = {});

/// Test-split accuracy of a checkpoint for 1-shot and 5-shot episodes.
AccuracyRow run_eval(const Checkpoint& checkpoint, std::int64_t episodes, std::uint64_t seed, std::ostream* warnings = nullptr);

}  // namespace maco
