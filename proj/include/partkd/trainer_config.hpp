// Copyright 2026 The partkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <vector>

#include "partkd/backbone.hpp"
#include "partkd/common.hpp"
#include "partkd/distill.hpp"

namespace partkd {

struct TrainConfig {
  // SGD schedule
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> lr_decay_epochs = {30, 40, 50};
  double lr_decay_factor = 0.1;
  int epochs = 60;

  std::uint64_t seed = 1;
  double occlusion_p = 0.0;  // degradation level applied to the low-quality data
  bool reocclude_per_epoch = false;
  bool masked_pooling = false;
  int threads = default_thread_count();
  int frames = kModelFrames;

  DistillConfig distill;
  BackboneConfig backbone;

  // Desk-scale profile: short sequences, a small block stack, and a
  // compressed schedule with the same decay shape. The small batches and
  // tiny dataset need a gentler base rate than the full-scale schedule.
  static TrainConfig fast_profile() {
    TrainConfig cfg;
    cfg.frames = 60;
    cfg.backbone = BackboneConfig::fast_profile();
    cfg.epochs = 24;
    cfg.lr = 0.05;
    cfg.lr_decay_epochs = {16, 21};
    return cfg;
  }

  void validate() const {
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
      throw ConfigError("train: lr_decay_factor must be in (0,1]");
    int prev = -1;
    for (int e : lr_decay_epochs) {
      if (e <= prev) throw ConfigError("train: decay epochs must be strictly increasing");
      if (e >= epochs) throw ConfigError("train: decay epochs must be < epochs");
      prev = e;
    }
    if (!(occlusion_p >= 0.0 && occlusion_p <= 1.0))
      throw ConfigError("train: occlusion_p must be in [0,1]");
    if (threads < 1) throw ConfigError("train: threads must be >= 1");
    if (frames < 1) throw ConfigError("train: frames must be >= 1");
    distill.validate();
    backbone.validate();
  }

  double lr_at(int epoch) const {
    double value = lr;
    for (int e : lr_decay_epochs)
      if (epoch >= e) value *= lr_decay_factor;
    return value;
  }
};

inline void to_json(nlohmann::json& j, const DistillConfig& cfg) {
  j = {{"w", cfg.w},
       {"alpha", cfg.alpha},
       {"batch_low", cfg.batch_low},
       {"batch_high", cfg.batch_high},
       {"epsilon_cos", cfg.epsilon_cos}};
}

inline void from_json(const nlohmann::json& j, DistillConfig& cfg) {
  cfg.w = j.value("w", cfg.w);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.batch_low = j.value("batch_low", cfg.batch_low);
  cfg.batch_high = j.value("batch_high", cfg.batch_high);
  cfg.epsilon_cos = j.value("epsilon_cos", cfg.epsilon_cos);
}

inline void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"lr", cfg.lr},
       {"momentum", cfg.momentum},
       {"weight_decay", cfg.weight_decay},
       {"lr_decay_epochs", cfg.lr_decay_epochs},
       {"lr_decay_factor", cfg.lr_decay_factor},
       {"epochs", cfg.epochs},
       {"seed", cfg.seed},
       {"occlusion_p", cfg.occlusion_p},
       {"reocclude_per_epoch", cfg.reocclude_per_epoch},
       {"masked_pooling", cfg.masked_pooling},
       {"threads", cfg.threads},
       {"frames", cfg.frames},
       {"distill", cfg.distill},
       {"backbone", cfg.backbone}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.lr = j.value("lr", cfg.lr);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.lr_decay_epochs = j.value("lr_decay_epochs", cfg.lr_decay_epochs);
  cfg.lr_decay_factor = j.value("lr_decay_factor", cfg.lr_decay_factor);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.occlusion_p = j.value("occlusion_p", cfg.occlusion_p);
  cfg.reocclude_per_epoch = j.value("reocclude_per_epoch", cfg.reocclude_per_epoch);
  cfg.masked_pooling = j.value("masked_pooling", cfg.masked_pooling);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.frames = j.value("frames", cfg.frames);
  if (j.contains("distill")) j.at("distill").get_to(cfg.distill);
  if (j.contains("backbone")) j.at("backbone").get_to(cfg.backbone);
}

}  // namespace partkd
