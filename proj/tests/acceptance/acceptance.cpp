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

// Acceptance suite: one PASS/FAIL line per criterion. `--only AC1,AC3` runs a
// subset; the exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "maco/cli_io.hpp"
#include "maco/grad_check.hpp"
#include "maco/ops.hpp"
#include "maco/runtime.hpp"
#include "support/oracles.hpp"

namespace {

namespace fs = std::filesystem;
using namespace maco;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <typename T>
Episode<T> random_episode(const ModelConfig& c, Rng& rng, int target) {
  Episode<T> ep;
  const Shape img{c.image_size, c.image_size, c.channels};
  ep.support.resize(static_cast<std::size_t>(c.ways));
  for (auto& cls : ep.support)
    for (int i = 0; i < c.shots; ++i) cls.push_back(testing::random_tensor<T>(img, rng, 0.0, 1.0));
  ep.query = testing::random_tensor<T>(img, rng, 0.0, 1.0);
  ep.target = target;
  return ep;
}

fs::path scratch_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("maco_acceptance_" + std::to_string(::getpid()) + "_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig shipped_config(const std::string& name) {
  return load_run_config(fs::path(MACO_SOURCE_DIR) / "configs" / name);
}

// AC1: primitive and full-model gradients against central differences.
Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  Outcome o;
  Rng rng(101);
  double worst_primitive = 0.0;
  std::string worst_name;
  for (const auto& c : testing::primitive_gradient_cases()) {
    for (int trial = 0; trial < 25; ++trial) {
      const double e = c.run(rng);
      if (e > worst_primitive) {
        worst_primitive = e;
        worst_name = c.name;
      }
    }
  }
  ModelConfig c;
  c.image_size = 16;
  c.feature_dim = 24;
  c.embed_dim = 16;
  c.relational_depth = c.conditioning_depth = 2;
  c.shots = 2;
  MacoNet<double> net(c, 102);
  Rng erng(103);
  auto ep = random_episode<double>(c, erng, 1);
  Rng pick(104);
  auto eval_report = grad_check_params([&] { return net.forward(ep, Mode::kEval).loss; }, net.params(), 6, pick, 1e-6);
  std::vector<Episode<double>> batch{random_episode<double>(c, erng, 0), random_episode<double>(c, erng, 4)};
  auto train_report = grad_check_params(
      [&] { return net.forward(std::span<const Episode<double>>(batch), Mode::kTrain).loss; }, net.params(), 6, pick, 1e-6);
  const double elapsed = seconds_since(t0);
  o.pass = worst_primitive < 1e-4 && eval_report.max_error < 1e-4 && train_report.max_error < 1e-4 && elapsed < 120.0;
  o.detail = "primitives max rel err " + fmt("%.2e", worst_primitive) + " (" + worst_name + "), full model (5-way 2-shot 16x16, depths 2) eval " +
             fmt("%.2e", eval_report.max_error) + " / train " + fmt("%.2e", train_report.max_error) + " (worst at " + (eval_report.max_error > train_report.max_error ? eval_report.worst : train_report.worst) + ") over " +
             std::to_string(eval_report.coordinates + train_report.coordinates) + " coords, " +
             fmt("%.1f s", elapsed) + " (limits 1e-4, 120 s; steps 1e-5 primitives, 1e-6 model)";
  return o;
}

// AC2: convolutions against nested-loop references.
Outcome convolution_oracle() {
  const auto t0 = Clock::now();
  Rng rng(201);
  double worst2 = 0.0, worst1 = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int b = 1 + static_cast<int>(rng.below(3));
    const int h = 1 + static_cast<int>(rng.below(12)), w = 1 + static_cast<int>(rng.below(12));
    const int c = 1 + static_cast<int>(rng.below(8)), f = 1 + static_cast<int>(rng.below(8));
    auto x = testing::random_tensor<double>(Shape{b, h, w, c}, rng);
    auto k = testing::random_tensor<double>(Shape{3, 3, c, f}, rng);
    auto bias = testing::random_tensor<double>(Shape{f}, rng);
    auto got = conv2d_same(x, k, bias);
    auto want = testing::naive_conv2d_same(x, k, bias);
    for (std::size_t i = 0; i < want.size(); ++i) worst2 = std::max(worst2, std::abs(got.data()[i] - want[i]));
  }
  for (int trial = 0; trial < 200; ++trial) {
    const int b = 1 + static_cast<int>(rng.below(4));
    const int len = 3 + static_cast<int>(rng.below(8));
    const int c = 1 + static_cast<int>(rng.below(16)), f = 1 + static_cast<int>(rng.below(16));
    auto x = testing::random_tensor<double>(Shape{b, len, c}, rng);
    auto k = testing::random_tensor<double>(Shape{3, c, f}, rng);
    auto bias = testing::random_tensor<double>(Shape{f}, rng);
    auto got = conv1d_valid(x, k, bias);
    auto want = testing::naive_conv1d_valid(x, k, bias);
    for (std::size_t i = 0; i < want.size(); ++i) worst1 = std::max(worst1, std::abs(got.data()[i] - want[i]));
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst2 <= 1e-6 && worst1 <= 1e-6 && elapsed < 10.0;
  o.detail = "200+200 instances, conv2d_same max abs diff " + fmt("%.2e", worst2) + ", conv1d_valid " +
             fmt("%.2e", worst1) + ", " + fmt("%.2f s", elapsed) + " (limits 1e-6, 10 s)";
  return o;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

// AC3: relational stage set properties at full feature and embedding width.
Outcome relational_properties() {
  ModelConfig c;
  c.relational_depth = c.conditioning_depth = 2;
  MacoNet<float> net(c, 301);
  Rng rng(302);
  NoGradGuard guard;
  const Shape feat{c.feature_dim};
  double worst_perm = 0.0, worst_same = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    std::vector<Tensor<float>> xs;
    for (int i = 0; i < n; ++i) xs.push_back(testing::random_tensor<float>(feat, rng));
    auto base = net.relational_stage(xs, Mode::kEval);
    rng.shuffle(std::span<Tensor<float>>(xs));
    worst_perm = std::max(worst_perm, max_abs_diff(base, net.relational_stage(xs, Mode::kEval)));
  }
  bool counts_ok = true;
  std::ostringstream counts;
  for (int n = 2; n <= 6; ++n) {
    auto x = testing::random_tensor<float>(feat, rng);
    std::vector<Tensor<float>> same(static_cast<std::size_t>(n), x);
    auto g = net.relational_g(x, x, Mode::kEval);
    net.reset_counters();
    auto r = net.relational_stage(same, Mode::kEval);
    worst_same = std::max(worst_same, max_abs_diff(r, g));
    const auto expected = static_cast<std::uint64_t>(n * (n - 1) / 2);
    counts << (n > 2 ? "," : "") << net.pair_evaluations();
    counts_ok = counts_ok && net.pair_evaluations() == expected;
  }
  Outcome o;
  o.pass = worst_perm <= 1e-5 && worst_same <= 1e-5 && counts_ok;
  o.detail = "permutation max diff " + fmt("%.2e", worst_perm) + " over 100 sets, identical-image vs g(x,x) " +
             fmt("%.2e", worst_same) + ", pair counts n=2..6: " + counts.str() + " (want 1,3,6,10,15)";
  return o;
}

// AC4: the ablated conditioning stage ignores the query; the full one does not.
Outcome ablation_contract() {
  ModelConfig c;
  c.relational_depth = c.conditioning_depth = 2;
  NoGradGuard guard;
  Rng rng(401);
  auto ep = random_episode<float>(c, rng, 0);
  auto run = [&](bool enabled) {
    ModelConfig cc = c;
    cc.conditioning_enabled = enabled;
    MacoNet<float> net(cc, 402);
    Rng qrng(403);
    auto e = ep;
    auto base = net.forward(e, Mode::kEval).conditioned;
    int identical = 0;
    for (int q = 0; q < 100; ++q) {
      e.query = testing::random_tensor<float>(ep.query.shape(), qrng, 0.0, 1.0);
      auto other = net.forward(e, Mode::kEval).conditioned;
      identical += std::equal(base.data().begin(), base.data().end(), other.data().begin()) ? 1 : 0;
    }
    return identical;
  };
  const int off = run(false);
  const int on = run(true);
  Outcome o;
  o.pass = off == 100 && on == 0;
  o.detail = "disabled: " + std::to_string(off) + "/100 queries bit-identical; enabled: " + std::to_string(on) +
             "/100 identical";
  return o;
}

// AC5: learning runs on the synthetic dataset.
Outcome learning_smoke() {
  constexpr double kBudgetSeconds = 30.0 * 60.0;
  const RunConfig base = shipped_config("synthetic_quick.json");
  const std::int64_t budget_episodes = base.schedule.epochs * base.schedule.episodes_per_epoch;
  auto attempt = [&](std::uint64_t seed, bool conditioning, double threshold, bool strict) {
    RunConfig c = base;
    c.seed = seed;
    c.split_seed = seed;
    c.model.conditioning_enabled = conditioning;
    c.output_dir = scratch_dir("learn_" + std::to_string(seed) + (conditioning ? "_maco" : "_nocond"));
    const auto t0 = Clock::now();
    std::ostringstream log;
    bool reached = false;
    int epochs = 0;
    TrainingRun run = run_train(c, log, [&](const FitResult& r) {
      epochs = static_cast<int>(r.history.size() / 2);
      reached = strict ? r.best_val_accuracy > threshold : r.best_val_accuracy >= threshold;
      return !reached && seconds_since(t0) <= kBudgetSeconds;
    });
    const double elapsed = seconds_since(t0);
    fs::remove_all(c.output_dir);
    const bool ok = reached && elapsed <= kBudgetSeconds;
    std::ostringstream line;
    line << (conditioning ? "maco" : "no-cond") << " seed " << seed << ": best val "
         << fmt("%.3f", run.result.best_val_accuracy) << " after " << epochs * c.schedule.episodes_per_epoch
         << " episodes, " << fmt("%.0f s", elapsed) << (ok ? " ok" : " MISS");
    std::cout << "    " << line.str() << std::endl;
    return ok;
  };
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) hits += attempt(seed, true, 0.60, false) ? 1 : 0;
  const bool ablated = attempt(1, false, 0.40, true);
  Outcome o;
  o.pass = hits >= 4 && ablated;
  o.detail = "maco reached 60% val in " + std::to_string(hits) + "/5 seeds (need 4), no-cond above 40%: " +
             (ablated ? "yes" : "no") + " (budget " + std::to_string(budget_episodes) + " episodes, 30 min per run)";
  return o;
}

// AC6: Nadam against the hand-executed oracle and on a 10-d quadratic.
Outcome optimizer_check() {
  ParamStore<double> s;
  s.add("theta", Tensor<double>(Shape{1}, 1.0));
  auto st = NadamState<double>::create(s);
  std::vector<double> g{1.0};
  nadam_step(s, GradientMap<double>{{"theta", std::span<const double>(g)}}, st);
  const double one_step_err = std::abs(s.at("theta").item() - 0.998100000019);

  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(600 + seed);
    std::vector<double> a(10);
    for (auto& v : a) v = rng.uniform(0.5, 2.0);
    ParamStore<double> q;
    q.add("x", testing::random_tensor<double>(Shape{10}, rng));
    NadamConfig h;
    h.learning_rate = 0.01;
    auto qs = NadamState<double>::create(q, h);
    auto loss = [&] {
      double f = 0.0;
      for (int i = 0; i < 10; ++i) f += 0.5 * a[i] * q.at("x").data()[i] * q.at("x").data()[i];
      return f;
    };
    const double start = loss();
    std::vector<double> grad(10);
    for (int step = 0; step < 200; ++step) {
      for (int i = 0; i < 10; ++i) grad[i] = a[i] * q.at("x").data()[i];
      nadam_step(q, GradientMap<double>{{"x", std::span<const double>(grad)}}, qs);
    }
    worst_ratio = std::max(worst_ratio, loss() / start);
  }
  Outcome o;
  o.pass = one_step_err <= 1e-12 && worst_ratio <= 0.01;
  o.detail = "single step error " + fmt("%.1e", one_step_err) + " (limit 1e-12); 200 steps, worst of 20 quadratics kept " +
             fmt("%.2e", worst_ratio) + " of the loss (limit 1e-2)";
  return o;
}

// AC7: schedule arithmetic and best-epoch selection.
Outcome protocol_fidelity() {
  const RunConfig cub = shipped_config("cub.json");
  const std::int64_t steps = steps_per_epoch(cub.schedule.episodes_per_epoch, cub.schedule.batch_size);
  const std::vector<double> acc{0.5, 0.7, 0.6};
  int saved = 0;
  auto r = fit_loop(
      3, [](int) { return MetricsRecord{}; },
      [&](int e) {
        MetricsRecord m;
        m.split = Split::kVal;
        m.accuracy = acc[static_cast<std::size_t>(e - 1)];
        return m;
      },
      [&](int e, double) { saved = e; });
  Outcome o;
  o.pass = cub.schedule.epochs == 50 && cub.schedule.episodes_per_epoch == 60000 && cub.schedule.batch_size == 32 &&
           steps == 1875 && r.best_epoch == 2 && saved == 2;
  o.detail = std::to_string(cub.schedule.epochs) + " x " + std::to_string(cub.schedule.episodes_per_epoch) +
             " episodes at batch " + std::to_string(cub.schedule.batch_size) + " -> " + std::to_string(steps) +
             " steps/epoch; scripted val [0.5,0.7,0.6] -> best epoch " + std::to_string(r.best_epoch) +
             ", checkpoint from epoch " + std::to_string(saved);
  return o;
}

// AC8: two identical runs write byte-identical metrics.
Outcome determinism() {
  RunConfig c = shipped_config("synthetic_quick.json");
  c.dataset.synth_classes = 15;
  c.dataset.synth_per_class = 10;
  c.split_counts = {5, 5, 5};
  c.model.image_size = 32;
  c.schedule.epochs = 2;
  c.schedule.episodes_per_epoch = 32;
  c.schedule.batch_size = 8;
  c.schedule.val_episodes = 50;
  c.seed = 7;
  // Same output directory both times, so the embedded run config matches too.
  c.output_dir = scratch_dir("determinism");
  std::string csv[2], ckpt[2];
  for (int i = 0; i < 2; ++i) {
    std::ostringstream log;
    run_train(c, log);
    csv[i] = testing::slurp(c.output_dir / "metrics.csv");
    ckpt[i] = testing::slurp(c.output_dir / "best.ckpt");
    fs::remove(c.output_dir / "metrics.csv");
    fs::remove(c.output_dir / "best.ckpt");
  }
  fs::remove_all(c.output_dir);
  Outcome o;
  o.pass = !csv[0].empty() && csv[0] == csv[1];
  o.detail = "metrics.csv " + std::to_string(csv[0].size()) + " bytes, identical: " + (csv[0] == csv[1] ? "yes" : "no") +
             "; best.ckpt identical: " + (ckpt[0] == ckpt[1] ? "yes" : "no");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string id; std::getline(ss, id, ',');) only.insert(id);
    } else {
      std::cerr << "usage: maco_acceptance [--only AC1,AC2,...]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", gradient_oracle},    {"AC2", convolution_oracle}, {"AC3", relational_properties},
      {"AC4", ablation_contract},  {"AC5", learning_smoke},     {"AC6", optimizer_check},
      {"AC7", protocol_fidelity},  {"AC8", determinism},
  };
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
