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

#include "maco/model.hpp"

#include <algorithm>

#include "maco/init.hpp"
#include "maco/random.hpp"

namespace maco {
namespace {

std::string block_name(const std::string& stage, int i) { return stage + "/block" + std::to_string(i); }

template <typename T>
void add_dense(ParamStore<T>& store, Rng& rng, const std::string& prefix, std::int64_t in, std::int64_t out) {
  store.add(prefix + "/weights", lecun_normal<T>(Shape{out, in}, in, rng));
  store.add(prefix + "/bias", Tensor<T>(Shape{out}, T(0)));
}

template <typename T>
void add_fc_stack(ParamStore<T>& store, Rng& rng, const ModelConfig& c, const std::string& stage, int depth,
                  std::int64_t input) {
  for (int i = 0; i < depth; ++i) {
    const std::string b = block_name(stage, i);
    add_dense(store, rng, b + "/dense", i == 0 ? input : c.embed_dim, c.embed_dim);
    BatchNormState<T>::create(store, b + "/bn", c.embed_dim, T(c.bn_momentum), T(c.bn_epsilon));
  }
}

}  // namespace

int ModelConfig::pooled_size() const {
  int s = image_size;
  for (int i = 0; i < kConvBlocks; ++i) s /= 2;
  return s;
}

std::int64_t ModelConfig::flatten_dim() const {
  return static_cast<std::int64_t>(pooled_size()) * pooled_size() * kConvFilters;
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, "ModelConfig." + field, why); };
  if (image_size < 16) bad("image_size", "must be at least 16 so four 2x2 poolings leave a pixel");
  if (channels < 1) bad("channels", "must be positive");
  if (feature_dim < 1 || embed_dim < 1) bad("feature_dim", "dimensions must be positive");
  if (relational_depth < 2) bad("relational_depth", "needs distinct first and final blocks (>= 2)");
  if (conditioning_depth < 2) bad("conditioning_depth", "needs distinct first and final blocks (>= 2)");
  if (ways < 5) bad("ways", "the two width-3 valid convolutions need K >= 5");
  if (shots < 1) bad("shots", "must be at least 1");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) bad("bn_momentum", "must lie in (0,1)");
  if (!(bn_epsilon > 0.0)) bad("bn_epsilon", "must be positive");
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ParamStore<T> store;
  Rng rng(seed);
  std::int64_t cin = c.channels;
  for (int i = 0; i < kConvBlocks; ++i) {
    const std::string b = block_name("feature", i);
    store.add(b + "/conv/kernel", glorot_normal<T>(Shape{3, 3, cin, kConvFilters}, 9 * cin, 9 * kConvFilters, rng));
    store.add(b + "/conv/bias", Tensor<T>(Shape{kConvFilters}, T(0)));
    BatchNormState<T>::create(store, b + "/bn", kConvFilters, T(c.bn_momentum), T(c.bn_epsilon));
    cin = kConvFilters;
  }
  add_dense(store, rng, "feature/linear", c.flatten_dim(), c.feature_dim);

  add_fc_stack(store, rng, c, "relational", c.relational_depth, 2 * std::int64_t{c.feature_dim});
  const std::int64_t cond_in = c.conditioning_enabled ? c.embed_dim + c.feature_dim : c.embed_dim;
  add_fc_stack(store, rng, c, "conditioning", c.conditioning_depth, cond_in);

  const std::int64_t d = c.embed_dim;
  for (int i = 0; i < 2; ++i) {
    const std::string b = "classifier/conv" + std::to_string(i);
    store.add(b + "/kernel", glorot_normal<T>(Shape{3, d, d}, 3 * d, 3 * d, rng));
    store.add(b + "/bias", Tensor<T>(Shape{d}, T(0)));
    BatchNormState<T>::create(store, b + "/bn", d, T(c.bn_momentum), T(c.bn_epsilon));
  }
  add_dense(store, rng, "classifier/fc", d + c.feature_dim, d);
  BatchNormState<T>::create(store, "classifier/fc/bn", d, T(c.bn_momentum), T(c.bn_epsilon));
  add_dense(store, rng, "classifier/out", d, c.ways);
  return store;
}

template <typename T>
MacoNet<T>::MacoNet(ModelConfig config, std::uint64_t seed)
    : MacoNet(config, init_params<T>(config, seed)) {}

template <typename T>
MacoNet<T>::MacoNet(ModelConfig config, ParamStore<T> params) : config_(config), params_(std::move(params)) {
  config_.validate();
  bind_batchnorm();
}

template <typename T>
void MacoNet<T>::bind_batchnorm() {
  bn_.clear();
  const std::string suffix = "/gamma";
  for (const auto& e : params_.entries()) {
    if (e.path.size() > suffix.size() && e.path.ends_with(suffix)) {
      const std::string prefix = e.path.substr(0, e.path.size() - suffix.size());
      bn_.emplace(prefix, BatchNormState<T>::bind(params_, prefix, T(config_.bn_momentum), T(config_.bn_epsilon)));
    }
  }
}

template <typename T>
BatchNormState<T>& MacoNet<T>::bn(const std::string& prefix) {
  auto it = bn_.find(prefix);
  if (it == bn_.end()) fail(ErrorKind::kConfig, prefix, "no batch-norm state");
  return it->second;
}

template <typename T>
Tensor<T> MacoNet<T>::fc_block(const Tensor<T>& x, const std::string& prefix, Mode mode) {
  Tensor<T> y = dense(x, params_.at(prefix + "/dense/weights"), params_.at(prefix + "/dense/bias"), prefix + "/dense");
  y = batchnorm(y, bn(prefix + "/bn"), mode == Mode::kTrain, prefix + "/bn");
  return elu(y);
}

template <typename T>
Tensor<T> MacoNet<T>::fc_stack(const Tensor<T>& x, const std::string& stage, int depth, Mode mode) {
  Tensor<T> first = fc_block(x, block_name(stage, 0), mode);
  Tensor<T> h = first;
  for (int i = 1; i < depth; ++i) h = fc_block(h, block_name(stage, i), mode);
  return add(first, h, stage + "/skip");
}

template <typename T>
Tensor<T> MacoNet<T>::feature_stage(const Tensor<T>& images, Mode mode) {
  const bool single = images.rank() == 3;
  if ((images.rank() != 3 && images.rank() != 4) || images.dim(images.rank() - 1) != config_.channels ||
      images.dim(images.rank() - 2) != config_.image_size || images.dim(images.rank() - 3) != config_.image_size) {
    fail(ErrorKind::kShape, "feature", "images " + shape_str(images.shape()) + " do not match " +
                                           std::to_string(config_.image_size) + "x" + std::to_string(config_.image_size) +
                                           "x" + std::to_string(config_.channels));
  }
  Tensor<T> h = single ? reshape(images, Shape{1, images.dim(0), images.dim(1), images.dim(2)}) : images;
  const std::int64_t batch = h.dim(0);
  images_featurized_ += static_cast<std::uint64_t>(batch);
  for (int i = 0; i < kConvBlocks; ++i) {
    const std::string b = block_name("feature", i);
    h = conv2d_same(h, params_.at(b + "/conv/kernel"), params_.at(b + "/conv/bias"), b + "/conv");
    h = batchnorm(h, bn(b + "/bn"), mode == Mode::kTrain, b + "/bn");
    h = elu(h);
    h = maxpool2(h, b + "/pool");
  }
  h = reshape(h, Shape{batch, config_.flatten_dim()});
  h = dense(h, params_.at("feature/linear/weights"), params_.at("feature/linear/bias"), "feature/linear");
  return single ? reshape(h, Shape{config_.feature_dim}) : h;
}

template <typename T>
Tensor<T> MacoNet<T>::relational_g(const Tensor<T>& xi, const Tensor<T>& xj, Mode mode) {
  if (xi.shape() != xj.shape()) {
    fail(ErrorKind::kShape, "relational", "pair members " + shape_str(xi.shape()) + " and " + shape_str(xj.shape()));
  }
  pair_evaluations_ += xi.rank() == 1 ? 1 : static_cast<std::uint64_t>(xi.dim(0));
  return fc_stack(concat(xi, xj, xi.rank() - 1, "relational/input"), "relational", config_.relational_depth, mode);
}

template <typename T>
Tensor<T> MacoNet<T>::pairs_to_classes(const Tensor<T>& features, const std::vector<std::int64_t>& left,
                                       const std::vector<std::int64_t>& right,
                                       const std::vector<std::int64_t>& segment, std::int64_t classes, Mode mode) {
  // g is not symmetric, so each unordered pair is fed in a canonical order
  // (lexicographically smaller feature row first). The class vector then
  // does not depend on the order of the support images.
  const auto width = static_cast<std::size_t>(features.dim(features.rank() - 1));
  const T* base = features.data().data();
  std::vector<std::int64_t> lo(left), hi(right);
  for (std::size_t p = 0; p < lo.size(); ++p) {
    const T* a = base + lo[p] * width;
    const T* b = base + hi[p] * width;
    if (std::lexicographical_compare(b, b + width, a, a + width)) std::swap(lo[p], hi[p]);
  }
  Tensor<T> g = relational_g(gather_rows(features, std::span<const std::int64_t>(lo)),
                             gather_rows(features, std::span<const std::int64_t>(hi)), mode);
  return segment_mean(g, std::span<const std::int64_t>(segment), classes, "relational/mean");
}

template <typename T>
Tensor<T> MacoNet<T>::relational_stage(std::span<const Tensor<T>> class_features, Mode mode) {
  if (class_features.empty()) fail(ErrorKind::kEmpty, "relational", "class has no images");
  Tensor<T> rows = stack(class_features, "relational/stack");
  const std::int64_t n = rows.dim(0);
  std::vector<std::int64_t> left, right;
  if (n == 1) {
    left = right = {0};
  } else {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = i + 1; j < n; ++j) {
        left.push_back(i);
        right.push_back(j);
      }
  }
  std::vector<std::int64_t> segment(left.size(), 0);
  return reshape(pairs_to_classes(rows, left, right, segment, 1, mode), Shape{config_.embed_dim});
}

template <typename T>
Tensor<T> MacoNet<T>::conditioning_stage(const Tensor<T>& class_vectors, const Tensor<T>& query_features, Mode mode) {
  Tensor<T> input = class_vectors;
  if (config_.conditioning_enabled) {
    input = concat(class_vectors, query_features, class_vectors.rank() - 1, "conditioning/input");
  }
  return fc_stack(input, "conditioning", config_.conditioning_depth, mode);
}

template <typename T>
Tensor<T> MacoNet<T>::classification_stage(const Tensor<T>& conditioned, const Tensor<T>& query_features, Mode mode) {
  const bool single = conditioned.rank() == 2;
  if (conditioned.rank() != 2 && conditioned.rank() != 3) {
    fail(ErrorKind::kShape, "classifier", "expected [K,D] or [E,K,D], got " + shape_str(conditioned.shape()));
  }
  const std::int64_t ways = conditioned.dim(conditioned.rank() - 2);
  if (ways < 5) {
    fail(ErrorKind::kShape, "classifier", std::to_string(ways) + "-way input; two valid width-3 convolutions need K >= 5");
  }
  if (ways != config_.ways) {
    fail(ErrorKind::kShape, "classifier", std::to_string(ways) + " class vectors for a " + std::to_string(config_.ways) +
                                              "-way output layer");
  }
  Tensor<T> h = single ? reshape(conditioned, Shape{1, conditioned.dim(0), conditioned.dim(1)}) : conditioned;
  Tensor<T> q = single ? reshape(query_features, Shape{1, query_features.dim(0)}) : query_features;
  for (int i = 0; i < 2; ++i) {
    const std::string b = "classifier/conv" + std::to_string(i);
    h = conv1d_valid(h, params_.at(b + "/kernel"), params_.at(b + "/bias"), b);
    h = batchnorm(h, bn(b + "/bn"), mode == Mode::kTrain, b + "/bn");
    h = elu(h);
  }
  h = mean_axis1(h);
  h = concat(h, q, 1, "classifier/query");
  h = dense(h, params_.at("classifier/fc/weights"), params_.at("classifier/fc/bias"), "classifier/fc");
  h = batchnorm(h, bn("classifier/fc/bn"), mode == Mode::kTrain, "classifier/fc/bn");
  h = elu(h);
  h = dense(h, params_.at("classifier/out/weights"), params_.at("classifier/out/bias"), "classifier/out");
  return single ? reshape(h, Shape{ways}) : h;
}

template <typename T>
ForwardResult<T> MacoNet<T>::forward_from_features(const Tensor<T>& features, std::span<const EpisodeLayout> layouts,
                                                   Mode mode, const ForwardOptions& options) {
  if (layouts.empty()) fail(ErrorKind::kEmpty, "forward", "no episodes");
  const int ways = config_.ways;
  const auto episodes = static_cast<std::int64_t>(layouts.size());
  std::vector<std::int64_t> left, right, segment, query_rep, query_rows;
  std::vector<int> targets;
  for (std::int64_t e = 0; e < episodes; ++e) {
    const EpisodeLayout& ep = layouts[e];
    if (ep.ways() != ways) {
      fail(ErrorKind::kShape, "forward", "episode has " + std::to_string(ep.ways()) + " classes, model is " +
                                             std::to_string(ways) + "-way");
    }
    for (int k = 0; k < ways; ++k) {
      const auto& rows = ep.support_rows[k];
      if (rows.empty()) fail(ErrorKind::kEmpty, "relational", "class position " + std::to_string(k) + " has no images");
      const std::int64_t seg = e * ways + k;
      if (rows.size() == 1) {
        left.push_back(rows[0]);
        right.push_back(rows[0]);
        segment.push_back(seg);
      }
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
          left.push_back(rows[i]);
          right.push_back(rows[j]);
          segment.push_back(seg);
        }
      query_rep.push_back(ep.query_row);
    }
    query_rows.push_back(ep.query_row);
    targets.push_back(ep.target);
  }

  ForwardResult<T> r;
  r.features = features;
  r.class_vectors = pairs_to_classes(features, left, right, segment, episodes * ways, mode);
  Tensor<T> query_per_class = gather_rows(features, std::span<const std::int64_t>(query_rep), "conditioning/query");
  r.conditioned = conditioning_stage(r.class_vectors, query_per_class, mode);

  Tensor<T> query = gather_rows(features, std::span<const std::int64_t>(query_rows), "classifier/query");
  if (!options.classifier_query_path) query = Tensor<T>(query.shape(), T(0));
  r.logits = classification_stage(reshape(r.conditioned, Shape{episodes, ways, config_.embed_dim}), query, mode);

  auto xent = softmax_cross_entropy(r.logits, std::span<const int>(targets));
  r.probs = std::move(xent.probs);
  r.loss = std::move(xent.loss);
  r.losses = std::move(xent.losses);
  for (std::int64_t e = 0; e < episodes; ++e) {
    const T* p = r.probs.data().data() + e * ways;
    r.predictions.push_back(static_cast<int>(std::max_element(p, p + ways) - p));
  }
  return r;
}

template <typename T>
ForwardResult<T> MacoNet<T>::forward(std::span<const Episode<T>> batch, Mode mode, const ForwardOptions& options) {
  if (batch.empty()) fail(ErrorKind::kEmpty, "forward", "no episodes");
  std::vector<Tensor<T>> images;
  std::vector<EpisodeLayout> layouts;
  for (const auto& ep : batch) {
    if (ep.target < 0 || ep.target >= ep.ways()) {
      fail(ErrorKind::kRange, "forward", "target " + std::to_string(ep.target) + " outside [0," +
                                             std::to_string(ep.ways()) + ")");
    }
    EpisodeLayout layout;
    for (const auto& cls : ep.support) {
      if (static_cast<int>(cls.size()) != ep.shots()) fail(ErrorKind::kShape, "forward", "classes differ in shot count");
      auto& rows = layout.support_rows.emplace_back();
      for (const auto& img : cls) {
        rows.push_back(static_cast<std::int64_t>(images.size()));
        images.push_back(img);
      }
    }
    layout.query_row = static_cast<std::int64_t>(images.size());
    images.push_back(ep.query);
    layout.target = ep.target;
    layouts.push_back(std::move(layout));
  }
  Tensor<T> features = feature_stage(stack(std::span<const Tensor<T>>(images), "forward/images"), mode);
  return forward_from_features(features, layouts, mode, options);
}

template <typename T>
ForwardResult<T> MacoNet<T>::forward(const Episode<T>& episode, Mode mode, const ForwardOptions& options) {
  return forward(std::span<const Episode<T>>(&episode, 1), mode, options);
}

template ParamStore<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ParamStore<double> init_params<double>(const ModelConfig&, std::uint64_t);
template class MacoNet<float>;
template class MacoNet<double>;

}  // namespace maco
