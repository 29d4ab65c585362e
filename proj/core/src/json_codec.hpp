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
// JSON field mapping for configuration structs, shared by checkpoints and run
// configs. Readers start from defaults and reject unknown keys.

#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "maco/episodes.hpp"
#include "maco/error.hpp"
#include "maco/model.hpp"
#include "maco/training.hpp"

namespace maco::json_codec {

using Json = nlohmann::ordered_json;

inline void reject_unknown(const Json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) fail(ErrorKind::kConfig, where, "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::kConfig, where + "." + key, "unknown key");
  }
}

template <typename V>
void read(const Json& j, const std::string& where, const char* key, V& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<V>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, where + "." + key, e.what());
  }
}

inline Json to_json(const ModelConfig& c) {
  return Json{{"image_size", c.image_size},
              {"channels", c.channels},
              {"feature_dim", c.feature_dim},
              {"embed_dim", c.embed_dim},
              {"relational_depth", c.relational_depth},
              {"conditioning_depth", c.conditioning_depth},
              {"ways", c.ways},
              {"shots", c.shots},
              {"conditioning_enabled", c.conditioning_enabled},
              {"bn_momentum", c.bn_momentum},
              {"bn_epsilon", c.bn_epsilon}};
}

inline void from_json(const Json& j, ModelConfig& c, const std::string& where = "model") {
  reject_unknown(j, where, {"image_size", "channels", "feature_dim", "embed_dim", "relational_depth",
                            "conditioning_depth", "ways", "shots", "conditioning_enabled", "bn_momentum",
                            "bn_epsilon"});
  read(j, where, "image_size", c.image_size);
  read(j, where, "channels", c.channels);
  read(j, where, "feature_dim", c.feature_dim);
  read(j, where, "embed_dim", c.embed_dim);
  read(j, where, "relational_depth", c.relational_depth);
  read(j, where, "conditioning_depth", c.conditioning_depth);
  read(j, where, "ways", c.ways);
  read(j, where, "shots", c.shots);
  read(j, where, "conditioning_enabled", c.conditioning_enabled);
  read(j, where, "bn_momentum", c.bn_momentum);
  read(j, where, "bn_epsilon", c.bn_epsilon);
}

inline Json to_json(const AugmentPolicy& p) {
  return Json{{"enabled", p.enabled},
              {"rotation_max_degrees", p.rotation_max_degrees},
              {"translate_max_fraction", p.translate_max_fraction},
              {"zoom_range", Json::array({p.zoom_low, p.zoom_high})},
              {"hflip_probability", p.hflip_probability}};
}

inline void from_json(const Json& j, AugmentPolicy& p, const std::string& where = "augment") {
  reject_unknown(j, where, {"enabled", "rotation_max_degrees", "translate_max_fraction", "zoom_range", "hflip_probability"});
  read(j, where, "enabled", p.enabled);
  read(j, where, "rotation_max_degrees", p.rotation_max_degrees);
  read(j, where, "translate_max_fraction", p.translate_max_fraction);
  read(j, where, "hflip_probability", p.hflip_probability);
  if (auto it = j.find("zoom_range"); it != j.end()) {
    if (!it->is_array() || it->size() != 2) fail(ErrorKind::kConfig, where + ".zoom_range", "expected [low, high]");
    p.zoom_low = (*it)[0].get<double>();
    p.zoom_high = (*it)[1].get<double>();
  }
}

inline Json to_json(const NadamConfig& n) {
  return Json{{"learning_rate", n.learning_rate}, {"beta1", n.beta1}, {"beta2", n.beta2}, {"epsilon", n.epsilon}};
}

inline void from_json(const Json& j, NadamConfig& n, const std::string& where = "optimizer") {
  reject_unknown(j, where, {"learning_rate", "beta1", "beta2", "epsilon"});
  read(j, where, "learning_rate", n.learning_rate);
  read(j, where, "beta1", n.beta1);
  read(j, where, "beta2", n.beta2);
  read(j, where, "epsilon", n.epsilon);
}

inline Json to_json(const Schedule& s) {
  return Json{{"epochs", s.epochs},
              {"episodes_per_epoch", s.episodes_per_epoch},
              {"batch_size", s.batch_size},
              {"val_episodes", s.val_episodes},
              {"optimizer", to_json(s.optimizer)}};
}

inline void from_json(const Json& j, Schedule& s, const std::string& where = "schedule") {
  reject_unknown(j, where, {"epochs", "episodes_per_epoch", "batch_size", "val_episodes", "optimizer"});
  read(j, where, "epochs", s.epochs);
  read(j, where, "episodes_per_epoch", s.episodes_per_epoch);
  read(j, where, "batch_size", s.batch_size);
  read(j, where, "val_episodes", s.val_episodes);
  if (auto it = j.find("optimizer"); it != j.end()) from_json(*it, s.optimizer, where + ".optimizer");
}

inline Json to_json(const SeedRecord& s) { return Json{{"run", s.run}, {"split", s.split}, {"data", s.data}}; }

inline void from_json(const Json& j, SeedRecord& s, const std::string& where = "seeds") {
  reject_unknown(j, where, {"run", "split", "data"});
  read(j, where, "run", s.run);
  read(j, where, "split", s.split);
  read(j, where, "data", s.data);
}

}  // namespace maco::json_codec
