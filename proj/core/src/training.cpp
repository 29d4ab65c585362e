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
#include "maco/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_codec.hpp"

namespace maco {

void NadamConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, "optimizer." + field, why); };
  if (!(learning_rate >= 0.0)) bad("learning_rate", "must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1", "must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2", "must lie in [0,1)");
  if (!(epsilon > 0.0)) bad("epsilon", "must be positive");
}

template <typename T>
NadamState<T> NadamState<T>::create(const ParamStore<T>& params, NadamConfig hyper) {
  hyper.validate();
  NadamState s;
  s.hyper = hyper;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    s.paths.push_back(e.path);
    s.m.emplace_back(e.tensor.size(), T(0));
    s.v.emplace_back(e.tensor.size(), T(0));
  }
  return s;
}

template <typename T>
void nadam_step(ParamStore<T>& params, const GradientMap<T>& grads, NadamState<T>& state) {
  std::size_t k = 0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    if (k >= grads.size() || grads[k].first != e.path) fail(ErrorKind::kData, e.path, "missing gradient");
    if (grads[k].second.size() != e.tensor.size()) {
      fail(ErrorKind::kShape, e.path, "gradient has " + std::to_string(grads[k].second.size()) + " values, parameter " +
                                          std::to_string(e.tensor.size()));
    }
    if (k >= state.paths.size() || state.paths[k] != e.path || state.m[k].size() != e.tensor.size()) {
      fail(ErrorKind::kShape, e.path, "optimizer state does not match the parameter store");
    }
    ++k;
  }
  if (k != grads.size()) fail(ErrorKind::kData, "nadam_step", "gradients name parameters outside the store");
  if (k != state.paths.size()) fail(ErrorKind::kShape, "nadam_step", "optimizer state does not match the parameter store");

  const auto& h = state.hyper;
  const std::int64_t t = ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  k = 0;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    std::span<T> theta = e.tensor.data();
    const std::span<const T> g = grads[k].second;
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_bar = h.beta1 * (mi / c1) + (1.0 - h.beta1) * gi / c1;
      theta[i] = static_cast<T>(theta[i] - h.learning_rate * m_bar / (std::sqrt(vi / c2) + h.epsilon));
    }
    ++k;
  }
}

template struct NadamState<float>;
template struct NadamState<double>;
template void nadam_step<float>(ParamStore<float>&, const GradientMap<float>&, NadamState<float>&);
template void nadam_step<double>(ParamStore<double>&, const GradientMap<double>&, NadamState<double>&);

std::int64_t steps_per_epoch(std::int64_t episodes, int batch_size) {
  if (episodes < 0 || batch_size < 1) fail(ErrorKind::kConfig, "schedule", "need episodes >= 0 and batch_size >= 1");
  return (episodes + batch_size - 1) / batch_size;
}

namespace {

void check_dataset(const ModelConfig& config, const Dataset& data) {
  if (data.image_size != config.image_size || data.channels != config.channels) {
    fail(ErrorKind::kConfig, "dataset", "images are " + std::to_string(data.image_size) + "x" +
                                            std::to_string(data.image_size) + "x" + std::to_string(data.channels) +
                                            ", model expects " + std::to_string(config.image_size) + "x" +
                                            std::to_string(config.image_size) + "x" + std::to_string(config.channels));
  }
}

void record(MetricsRecord& rec, const ForwardResult<float>& r, std::span<const int> targets, double& loss_sum) {
  for (std::size_t e = 0; e < r.losses.size(); ++e) {
    loss_sum += r.losses[e];
    rec.correct += r.predictions[e] == targets[e] ? 1 : 0;
  }
  rec.episodes += static_cast<std::int64_t>(r.losses.size());
}

void finish(MetricsRecord& rec, double loss_sum) {
  if (rec.episodes > 0) {
    rec.loss = loss_sum / static_cast<double>(rec.episodes);
    rec.accuracy = static_cast<double>(rec.correct) / static_cast<double>(rec.episodes);
  }
}

}  // namespace

MetricsRecord train_epoch(MacoNet<float>& model, EpisodeSampler& sampler, std::int64_t episodes, int batch_size,
                          NadamState<float>& optimizer, int epoch) {
  const std::int64_t steps = steps_per_epoch(episodes, batch_size);
  check_dataset(model.config(), sampler.data());
  MetricsRecord rec;
  rec.epoch = epoch;
  rec.split = Split::kTrain;
  double loss_sum = 0.0;
  std::int64_t left = episodes;
  for (std::int64_t s = 0; s < steps; ++s) {
    const auto n = static_cast<std::size_t>(std::min<std::int64_t>(batch_size, left));
    left -= static_cast<std::int64_t>(n);
    std::vector<Episode<float>> batch;
    std::vector<int> targets;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(sampler.next());
      targets.push_back(batch.back().target);
    }
    ForwardResult<float> r = model.forward(std::span<const Episode<float>>(batch), Mode::kTrain);
    nadam_step(model.params(), backward(r.loss, model.params()), optimizer);
    record(rec, r, targets, loss_sum);
  }
  finish(rec, loss_sum);
  return rec;
}

MetricsRecord evaluate(MacoNet<float>& model, EpisodeSampler& sampler, std::int64_t episodes, int epoch) {
  constexpr std::size_t kImageChunk = 64;
  constexpr std::size_t kEpisodeChunk = 64;
  NoGradGuard no_grad;
  const Dataset& data = sampler.data();
  check_dataset(model.config(), data);
  const std::int64_t width = model.config().feature_dim;

  std::vector<std::int64_t> base(static_cast<std::size_t>(data.num_classes()), -1);
  std::vector<Tensor<float>> images;
  for (int c : sampler.classes()) {
    base[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(images.size());
    const auto& imgs = data.images[static_cast<std::size_t>(c)];
    images.insert(images.end(), imgs.begin(), imgs.end());
  }
  Buffer<float> rows(images.size() * static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < images.size(); i += kImageChunk) {
    const std::size_t n = std::min(kImageChunk, images.size() - i);
    Tensor<float> f = model.feature_stage(stack(std::span<const Tensor<float>>(images.data() + i, n)), Mode::kEval);
    std::copy(f.data().begin(), f.data().end(), rows.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  const Tensor<float> features(Shape{static_cast<std::int64_t>(images.size()), width}, std::move(rows));

  MetricsRecord rec;
  rec.epoch = epoch;
  rec.split = sampler.split();
  double loss_sum = 0.0;
  std::vector<EpisodeLayout> layouts;
  std::vector<int> targets;
  auto flush = [&] {
    if (layouts.empty()) return;
    record(rec, model.forward_from_features(features, layouts, Mode::kEval), targets, loss_sum);
    layouts.clear();
    targets.clear();
  };
  for (std::int64_t e = 0; e < episodes; ++e) {
    const EpisodeSpec spec = sampler.next_spec();
    EpisodeLayout layout;
    for (std::size_t k = 0; k < spec.classes.size(); ++k) {
      auto& r = layout.support_rows.emplace_back();
      for (int idx : spec.support[k]) r.push_back(base[static_cast<std::size_t>(spec.classes[k])] + idx);
    }
    layout.query_row = base[static_cast<std::size_t>(spec.classes[static_cast<std::size_t>(spec.target)])] + spec.query_image;
    layout.target = spec.target;
    layouts.push_back(std::move(layout));
    targets.push_back(spec.target);
    if (layouts.size() == kEpisodeChunk) flush();
  }
  flush();
  finish(rec, loss_sum);
  return rec;
}

void Schedule::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, "schedule." + field, why); };
  if (epochs < 1) bad("epochs", "must be at least 1");
  if (episodes_per_epoch < 1) bad("episodes_per_epoch", "must be at least 1");
  if (batch_size < 1) bad("batch_size", "must be at least 1");
  if (val_episodes < 1) bad("val_episodes", "must be at least 1");
  optimizer.validate();
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'O', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char b[sizeof(U)];
  std::memcpy(b, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  out.append(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(const std::string& in, std::size_t offset) {
  if (offset + sizeof(U) > in.size()) fail(ErrorKind::kFormat, "checkpoint", "truncated file");
  unsigned char b[sizeof(U)];
  std::memcpy(b, in.data() + offset, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  U value;
  std::memcpy(&value, b, sizeof(U));
  return value;
}

void put_floats(std::string& blob, std::span<const float> values) {
  for (float f : values) put_le(blob, f);
}

std::vector<float> get_floats(const std::string& in, std::size_t offset, std::size_t count) {
  if (offset + count * sizeof(float) > in.size()) fail(ErrorKind::kFormat, "checkpoint", "tensor data out of range");
  std::vector<float> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = get_le<float>(in, offset + i * sizeof(float));
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  using json_codec::Json;
  std::string blob;
  Json params = Json::array();
  for (const auto& e : c.params.entries()) {
    params.push_back(Json{{"path", e.path},
                          {"shape", e.tensor.shape()},
                          {"trainable", e.trainable},
                          {"offset", blob.size()},
                          {"count", e.tensor.size()}});
    put_floats(blob, e.tensor.data());
  }
  Json moments = Json::array();
  for (std::size_t k = 0; k < c.optimizer.paths.size(); ++k) {
    Json rec{{"path", c.optimizer.paths[k]}, {"count", c.optimizer.m[k].size()}, {"m_offset", blob.size()}};
    put_floats(blob, c.optimizer.m[k]);
    rec["v_offset"] = blob.size();
    put_floats(blob, c.optimizer.v[k]);
    moments.push_back(std::move(rec));
  }
  Json meta{{"format", "maco-checkpoint"},
            {"dtype", "float32"},
            {"byte_order", "little"},
            {"config", json_codec::to_json(c.config)},
            {"augment", json_codec::to_json(c.augment)},
            {"seeds", json_codec::to_json(c.seeds)},
            {"epoch", c.epoch},
            {"val_accuracy", c.val_accuracy},
            {"optimizer", Json{{"hyper", json_codec::to_json(c.optimizer.hyper)}, {"step", c.optimizer.step}}},
            {"parameters", std::move(params)},
            {"moments", std::move(moments)}};
  if (!c.run_config.empty()) {
    try {
      meta["run_config"] = Json::parse(c.run_config);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, "checkpoint", std::string("run_config is not JSON: ") + e.what());
    }
  }
  const std::string text = meta.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out += blob;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  using json_codec::Json;
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::kFormat, "checkpoint", "not a checkpoint file (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kFormat, "checkpoint", "format version " + std::to_string(version) + ", this build reads version " +
                                               std::to_string(kCheckpointVersion));
  }
  const auto meta_len = get_le<std::uint64_t>(bytes, 12);
  const std::size_t meta_at = 20;
  if (meta_at + meta_len > bytes.size()) fail(ErrorKind::kFormat, "checkpoint", "truncated metadata");
  const std::size_t data_at = meta_at + meta_len;
  Json meta;
  try {
    meta = Json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(meta_at),
                       bytes.begin() + static_cast<std::ptrdiff_t>(data_at));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "checkpoint", std::string("metadata: ") + e.what());
  }

  try {
    Checkpoint c;
    json_codec::from_json(meta.at("config"), c.config);
    json_codec::from_json(meta.at("augment"), c.augment);
    json_codec::from_json(meta.at("seeds"), c.seeds);
    c.epoch = meta.at("epoch").get<int>();
    c.val_accuracy = meta.at("val_accuracy").get<double>();
    for (const auto& p : meta.at("parameters")) {
      const auto shape = p.at("shape").get<Shape>();
      const auto count = p.at("count").get<std::size_t>();
      if (static_cast<std::size_t>(numel(shape)) != count) fail(ErrorKind::kFormat, "checkpoint", "shape/count mismatch");
      c.params.add(p.at("path").get<std::string>(),
                   Tensor<float>(shape, get_floats(bytes, data_at + p.at("offset").get<std::size_t>(), count)),
                   p.at("trainable").get<bool>());
    }
    json_codec::from_json(meta.at("optimizer").at("hyper"), c.optimizer.hyper);
    c.optimizer.step = meta.at("optimizer").at("step").get<std::int64_t>();
    for (const auto& m : meta.at("moments")) {
      const auto count = m.at("count").get<std::size_t>();
      c.optimizer.paths.push_back(m.at("path").get<std::string>());
      c.optimizer.m.push_back(get_floats(bytes, data_at + m.at("m_offset").get<std::size_t>(), count));
      c.optimizer.v.push_back(get_floats(bytes, data_at + m.at("v_offset").get<std::size_t>(), count));
    }
    if (auto it = meta.find("run_config"); it != meta.end()) c.run_config = it->dump();
    c.config.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "checkpoint", std::string("metadata: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, path.string(), "write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

// ---- epoch driver ----

FitResult fit_loop(int epochs, const std::function<MetricsRecord(int)>& train,
                   const std::function<MetricsRecord(int)>& validate, const std::function<void(int, double)>& on_best,
                   const std::function<bool(const FitResult&)>& keep_going) {
  FitResult out;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    MetricsRecord tr = train(epoch);
    tr.epoch = epoch;
    tr.split = Split::kTrain;
    MetricsRecord va = validate(epoch);
    va.epoch = epoch;
    va.split = Split::kVal;
    out.history.push_back(tr);
    out.history.push_back(va);
    if (out.best_epoch == 0 || va.accuracy > out.best_val_accuracy) {
      out.best_epoch = epoch;
      out.best_val_accuracy = va.accuracy;
      if (on_best) on_best(epoch, va.accuracy);
    }
    if (keep_going && !keep_going(out)) break;
  }
  return out;
}

std::uint64_t init_seed(std::uint64_t run_seed) { return Rng::mix(run_seed ^ 0x1111); }
std::uint64_t train_stream_seed(std::uint64_t run_seed) { return Rng::mix(run_seed ^ 0x2222); }
std::uint64_t val_stream_seed(std::uint64_t run_seed) { return Rng::mix(run_seed ^ 0x3333); }
std::uint64_t test_stream_seed(std::uint64_t run_seed) { return Rng::mix(run_seed ^ 0x4444); }

TrainingRun fit(const ModelConfig& config, const Dataset& data, const ClassSplits& splits, const AugmentPolicy& augment,
                const Schedule& schedule, const SeedRecord& seeds,
                const std::function<bool(const FitResult&)>& keep_going) {
  config.validate();
  augment.validate();
  schedule.validate();
  check_dataset(config, data);
  MacoNet<float> model(config, init_seed(seeds.run));
  auto optimizer = NadamState<float>::create(model.params(), schedule.optimizer);
  EpisodeSampler train_sampler(data, splits.train, Split::kTrain, config.ways, config.shots, augment,
                               train_stream_seed(seeds.run));

  TrainingRun run;
  run.result = fit_loop(
      schedule.epochs,
      [&](int epoch) {
        return train_epoch(model, train_sampler, schedule.episodes_per_epoch, schedule.batch_size, optimizer, epoch);
      },
      [&](int epoch) {
        // The same validation episodes every epoch, so epochs are compared on equal terms.
        EpisodeSampler val_sampler(data, splits.val, Split::kVal, config.ways, config.shots, augment,
                                   val_stream_seed(seeds.run));
        return evaluate(model, val_sampler, schedule.val_episodes, epoch);
      },
      [&](int epoch, double accuracy) {
        run.best.config = config;
        run.best.augment = augment;
        run.best.seeds = seeds;
        run.best.epoch = epoch;
        run.best.val_accuracy = accuracy;
        run.best.params = model.params().clone();
        run.best.optimizer = optimizer;
      },
      keep_going);
  return run;
}

}  // namespace maco
