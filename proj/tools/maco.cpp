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

// maco: train, evaluate, split and synthesize few-shot datasets.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maco/cli_io.hpp"
#include "maco/runtime.hpp"

namespace {

namespace fs = std::filesystem;
using namespace maco;

struct TrainArgs {
  fs::path config;
  std::string variant = "maco";
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> output;
};

struct EvalArgs {
  fs::path checkpoint;
  std::int64_t episodes = 1000;
  std::uint64_t seed = 0;
  std::optional<fs::path> out;
};

struct SplitsArgs {
  fs::path classes;
  std::vector<int> counts;
  std::uint64_t seed = 0;
  fs::path out;
};

struct SynthArgs {
  int classes = 30;
  int per_class = 30;
  int size = 84;
  std::uint64_t seed = 0;
  fs::path out;
};

int train(const TrainArgs& a) {
  RunConfig config = load_run_config(a.config);
  config.model.conditioning_enabled = a.variant == "maco";
  if (a.seed) config.seed = *a.seed;
  if (a.output) config.output_dir = *a.output;
  run_train(config, std::cout);
  return 0;
}

int eval(const EvalArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  AccuracyRow row = run_eval(ckpt, a.episodes, a.seed, &std::cerr);
  std::cout << format_accuracy_table({row});
  const fs::path out = a.out.value_or(a.checkpoint.parent_path() / "accuracy.csv");
  std::ofstream f(out, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "eval", "cannot write " + out.string());
  f << format_accuracy_csv({row});
  if (!f) fail(ErrorKind::kIo, "eval", "write failed for " + out.string());
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int splits(const SplitsArgs& a) {
  if (a.counts.size() != 3) fail(ErrorKind::kConfig, "splits", "--counts takes train,val,test");
  std::vector<std::string> names;
  if (!fs::is_directory(a.classes)) fail(ErrorKind::kIo, "splits", "not a directory: " + a.classes.string());
  for (const auto& e : fs::directory_iterator(a.classes))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::vector<int> ids(names.size());
  std::iota(ids.begin(), ids.end(), 0);
  ClassSplits s = build_class_splits(ids, SplitCounts{a.counts[0], a.counts[1], a.counts[2]}, a.seed);
  write_split_manifest(a.out, s, names);
  std::cout << "wrote " << a.out.string() << " (" << s.train.size() << " train, " << s.val.size() << " val, "
            << s.test.size() << " test)\n";
  return 0;
}

int synth(const SynthArgs& a) {
  Dataset d = synth_dataset_generate(a.classes, a.per_class, a.size, a.seed);
  for (int c = 0; c < d.num_classes(); ++c) {
    const fs::path dir = a.out / d.class_names[static_cast<std::size_t>(c)];
    fs::create_directories(dir);
    for (std::size_t i = 0; i < d.class_size(c); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.png", i);
      write_png(dir / name, d.image(c, static_cast<int>(i)));
    }
  }
  std::cout << "wrote " << d.total_images() << " images in " << d.num_classes() << " classes to " << a.out.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"MACO few-shot classification"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write best.ckpt, metrics.csv, config.json");
  train_cmd->add_option("--config", ta.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", ta.variant, "maco or no-cond")->check(CLI::IsMember({"maco", "no-cond"}));
  train_cmd->add_option("--seed", ta.seed, "Global seed, overriding the config");
  train_cmd->add_option("--output", ta.output, "Output directory, overriding the config");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Test-split 1-shot and 5-shot accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--episodes", ea.episodes, "Episodes per shot setting")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", ea.seed, "Episode sampling seed");
  eval_cmd->add_option("--out", ea.out, "Accuracy CSV (default: accuracy.csv next to the checkpoint)");

  SplitsArgs sa;
  auto* splits_cmd = app.add_subcommand("splits", "Write a class split manifest for a dataset directory");
  splits_cmd->add_option("--classes", sa.classes, "Dataset root, one subdirectory per class")->required();
  splits_cmd->add_option("--counts", sa.counts, "train,val,test class counts")->required()->delimiter(',');
  splits_cmd->add_option("--seed", sa.seed, "Split seed");
  splits_cmd->add_option("--out", sa.out, "Manifest file")->required();

  SynthArgs ya;
  auto* synth_cmd = app.add_subcommand("synth", "Render the synthetic dataset as PNG files");
  synth_cmd->add_option("--classes", ya.classes, "Number of classes")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-class", ya.per_class, "Images per class")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", ya.out, "Output directory")->required();
  synth_cmd->add_option("--size", ya.size, "Image side length")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", ya.seed, "Render seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return train(ta);
    if (*eval_cmd) return eval(ea);
    if (*splits_cmd) return splits(sa);
    if (*synth_cmd) return synth(ya);
  } catch (const Error& e) {
    std::cerr << "maco: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "maco: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
