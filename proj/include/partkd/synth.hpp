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

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/graph.hpp"
#include "partkd/sequence.hpp"

namespace partkd {

// Configuration of the procedural dataset generator.
struct SynthConfig {
  int num_actions = 6;
  int samples_per_action = 100;
  int frame_length = 60;
  std::string teacher_schema = "synth16";
  std::string student_schema = "coco17";
  double lowq_noise_std = 0.04;    // coordinate units
  double lowq_joint_drop = 0.06;   // per (joint, body) probability
  double solitary_fraction = 0.0;  // share of instances emitted low-only
  std::uint64_t seed = 1;

  void validate() const {
    if (num_actions < 2) throw ConfigError("synth: num_actions must be >= 2");
    if (samples_per_action < 1) throw ConfigError("synth: samples_per_action must be >= 1");
    if (frame_length < 1) throw ConfigError("synth: frame_length must be >= 1");
    if (lowq_noise_std < 0.0) throw ConfigError("synth: lowq_noise_std must be >= 0");
    if (!(lowq_joint_drop >= 0.0 && lowq_joint_drop <= 1.0))
      throw ConfigError("synth: lowq_joint_drop must be in [0,1]");
    if (!(solitary_fraction >= 0.0 && solitary_fraction <= 1.0))
      throw ConfigError("synth: solitary_fraction must be in [0,1]");
  }
};

namespace detail {

// Per-part bone step used to lay out a rest pose for any registered schema,
// and per-part swing direction of the procedural motion. Displacements stay
// x/y dominant so 2D schemas keep most of the signal.
inline const std::array<std::array<double, 3>, kNumParts>& part_bone_steps() {
  static const std::array<std::array<double, 3>, kNumParts> steps = {{
      {0.00, 0.30, 0.00},    // head / torso chain grows upward
      {-0.30, 0.05, 0.00},   // left arm
      {0.30, 0.05, 0.00},    // right arm
      {-0.10, -0.30, 0.00},  // left leg
      {0.10, -0.30, 0.00},   // right leg
  }};
  return steps;
}

inline const std::array<std::array<double, 3>, kNumParts>& part_swing_dirs() {
  static const std::array<std::array<double, 3>, kNumParts> dirs = {{
      {0.15, 0.30, 0.10},
      {0.50, -0.15, 0.12},
      {-0.50, -0.15, 0.12},
      {0.28, 0.10, -0.08},
      {-0.28, 0.10, -0.08},
  }};
  return dirs;
}

// Deterministic humanoid-ish layout derived from the schema graph alone:
// joints are placed along the BFS tree from the center joint, stepping in
// the direction of the part each child belongs to. `swing_weight` grows
// towards distal joints so fingertips move more than shoulders.
struct RigLayout {
  std::vector<std::array<double, 3>> rest;
  std::vector<double> swing_weight;
  std::vector<int> part_of;
};

inline RigLayout build_rig_layout(const SkeletonGraph& g, const PartMap& pm) {
  RigLayout rig;
  const int V = g.V;
  rig.rest.assign(static_cast<std::size_t>(V), {0.0, 0.0, 0.0});
  rig.swing_weight.assign(static_cast<std::size_t>(V), 0.0);
  rig.part_of.assign(static_cast<std::size_t>(V), 0);
  for (int p = 0; p < kNumParts; ++p)
    for (int j : pm.parts[static_cast<std::size_t>(p)])
      rig.part_of[static_cast<std::size_t>(j)] = p;

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(V));
  for (auto [a, b] : g.edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  auto depth = hop_distances(g, g.center_joint);

  // BFS placement; siblings fan out slightly so they do not coincide.
  std::vector<int> order;
  std::vector<int> visited(static_cast<std::size_t>(V), 0);
  order.push_back(g.center_joint);
  visited[static_cast<std::size_t>(g.center_joint)] = 1;
  for (std::size_t head = 0; head < order.size(); ++head) {
    int u = order[head];
    int sibling = 0;
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (visited[static_cast<std::size_t>(v)]) continue;
      visited[static_cast<std::size_t>(v)] = 1;
      const auto& step = part_bone_steps()[static_cast<std::size_t>(
          rig.part_of[static_cast<std::size_t>(v)])];
      const double spread = 0.06 * sibling;
      rig.rest[static_cast<std::size_t>(v)] = {
          rig.rest[static_cast<std::size_t>(u)][0] + step[0] + spread,
          rig.rest[static_cast<std::size_t>(u)][1] + step[1],
          rig.rest[static_cast<std::size_t>(u)][2] + step[2] + 0.5 * spread,
      };
      ++sibling;
      order.push_back(v);
    }
  }

  // Swing weight: depth within the part, normalized to (0, 1].
  for (int p = 0; p < kNumParts; ++p) {
    int dmin = 1 << 30, dmax = -1;
    for (int j : pm.parts[static_cast<std::size_t>(p)]) {
      dmin = std::min(dmin, depth[static_cast<std::size_t>(j)]);
      dmax = std::max(dmax, depth[static_cast<std::size_t>(j)]);
    }
    for (int j : pm.parts[static_cast<std::size_t>(p)]) {
      rig.swing_weight[static_cast<std::size_t>(j)] =
          static_cast<double>(depth[static_cast<std::size_t>(j)] - dmin + 1) /
          static_cast<double>(dmax - dmin + 1);
    }
  }
  return rig;
}

// Per-class trajectory family: every part oscillates with a class-specific
// frequency and phase; one dominant and one secondary part carry extra
// amplitude so actions emphasize different body parts. Families depend only
// on the class index, never on the dataset seed, so independently generated
// train and test splits share the same classes.
struct MotionFamily {
  std::array<double, kNumParts> amplitude;
  std::array<double, kNumParts> frequency;  // cycles per sequence window
  std::array<double, kNumParts> phase;
};

inline MotionFamily motion_family(int action) {
  auto rng = rng_stream(0x9e37u, "motion_family", action);
  MotionFamily fam;
  const int dominant = action % kNumParts;
  const int secondary = (dominant + 1 + action / kNumParts) % kNumParts;
  for (int p = 0; p < kNumParts; ++p) {
    fam.amplitude[static_cast<std::size_t>(p)] = 0.22;
    fam.frequency[static_cast<std::size_t>(p)] = 1.0 + 2.5 * u01(rng);
    fam.phase[static_cast<std::size_t>(p)] = 2.0 * M_PI * u01(rng);
  }
  fam.amplitude[static_cast<std::size_t>(dominant)] += 0.50;
  fam.amplitude[static_cast<std::size_t>(secondary)] += 0.30;
  return fam;
}

// Per-instance jitter shared across both renderings of the instance.
struct InstanceJitter {
  std::array<double, kNumParts> phase;
  double amp_scale = 1.0;
  double freq_scale = 1.0;
  std::array<double, 3> drift{};  // per-frame root drift
  std::array<double, 3> origin{};
};

inline InstanceJitter draw_instance_jitter(std::uint64_t seed, int instance_index) {
  auto rng = rng_stream(seed, "instance_jitter", instance_index);
  InstanceJitter jit;
  for (int p = 0; p < kNumParts; ++p)
    jit.phase[static_cast<std::size_t>(p)] = 0.25 * (2.0 * u01(rng) - 1.0);
  jit.amp_scale = 1.0 + 0.15 * (2.0 * u01(rng) - 1.0);
  jit.freq_scale = 1.0 + 0.05 * (2.0 * u01(rng) - 1.0);
  for (int d = 0; d < 3; ++d) jit.origin[static_cast<std::size_t>(d)] = 0.1 * (2.0 * u01(rng) - 1.0);
  jit.drift = {0.002 * (2.0 * u01(rng) - 1.0), 0.0005 * (2.0 * u01(rng) - 1.0), 0.0};
  return jit;
}

inline SkeletonSequence render_motion(const std::string& schema_id, int action, int frames,
                                      const MotionFamily& fam, const InstanceJitter& jit,
                                      const std::string& instance_id, Quality quality) {
  const SkeletonGraph g = build_graph(schema_id);
  const PartMap pm = build_part_map(schema_id);
  static std::map<std::string, RigLayout> rig_cache;
  static std::mutex rig_mu;
  RigLayout rig;
  {
    std::lock_guard<std::mutex> lock(rig_mu);
    auto it = rig_cache.find(schema_id);
    if (it == rig_cache.end()) it = rig_cache.emplace(schema_id, build_rig_layout(g, pm)).first;
    rig = it->second;
  }

  SkeletonSequence seq;
  seq.instance_id = instance_id;
  seq.schema_id = schema_id;
  seq.label = action;
  seq.quality = quality;
  seq.length = frames;
  seq.bodies = 1;
  seq.V = g.V;
  seq.allocate();

  const auto& dirs = part_swing_dirs();
  for (int t = 0; t < frames; ++t) {
    const double tau = static_cast<double>(t) / static_cast<double>(frames);
    for (int v = 0; v < g.V; ++v) {
      const int p = rig.part_of[static_cast<std::size_t>(v)];
      const double w = rig.swing_weight[static_cast<std::size_t>(v)];
      const double angle = 2.0 * M_PI * fam.frequency[static_cast<std::size_t>(p)] *
                               jit.freq_scale * tau +
                           fam.phase[static_cast<std::size_t>(p)] +
                           jit.phase[static_cast<std::size_t>(p)];
      const double a =
          fam.amplitude[static_cast<std::size_t>(p)] * jit.amp_scale * w * std::sin(angle);
      double pos[3];
      for (int d = 0; d < 3; ++d) {
        pos[d] = rig.rest[static_cast<std::size_t>(v)][static_cast<std::size_t>(d)] +
                 a * dirs[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)] +
                 jit.origin[static_cast<std::size_t>(d)] +
                 jit.drift[static_cast<std::size_t>(d)] * static_cast<double>(t);
      }
      if (g.dims == 3) {
        seq.at(0, t, v, 0) = static_cast<float>(pos[0]);
        seq.at(1, t, v, 0) = static_cast<float>(pos[1]);
        seq.at(2, t, v, 0) = static_cast<float>(pos[2]);
      } else {
        seq.at(0, t, v, 0) = static_cast<float>(pos[0]);
        seq.at(1, t, v, 0) = static_cast<float>(pos[1]);
        seq.at(2, t, v, 0) = 1.0f;  // detection confidence
      }
    }
  }
  return seq;
}

// Coordinate noise plus whole-joint dropout; the low-quality degradation.
inline void degrade_low_quality(SkeletonSequence& seq, const SkeletonGraph& g, double noise_std,
                                double joint_drop, std::uint64_t seed, int instance_index) {
  if (noise_std > 0.0) {
    auto rng = rng_stream(seed, "lowq_noise", instance_index);
    const int coord_channels = g.dims;  // confidence channel keeps its value
    for (int c = 0; c < coord_channels; ++c)
      for (int t = 0; t < seq.length; ++t)
        for (int v = 0; v < seq.V; ++v)
          for (int m = 0; m < seq.bodies; ++m)
            seq.at(c, t, v, m) += static_cast<float>(noise_std * gaussian(rng));
  }
  if (joint_drop > 0.0) {
    auto rng = rng_stream(seed, "lowq_drop", instance_index);
    for (int v = 0; v < seq.V; ++v) {
      for (int m = 0; m < seq.bodies; ++m) {
        if (u01(rng) >= joint_drop) continue;
        for (int c = 0; c < kInputChannels; ++c)
          for (int t = 0; t < seq.length; ++t)
            seq.at(c, t, v, m) = 0.0f;
      }
    }
  }
}

}  // namespace detail

// Generates a class-separable synthetic dataset: each action is a distinct
// parameterized trajectory family rendered on the teacher schema as
// high-quality data and on the student schema as degraded low-quality data.
// The two renderings correspond at part granularity only: both rigs play the
// same per-part signals, no joint-to-joint map exists. A fixed share of
// instances per class is emitted low-only (solitary). Deterministic in seed.
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const SkeletonGraph student_graph = build_graph(cfg.student_schema);
  (void)build_graph(cfg.teacher_schema);

  Dataset ds;
  ds.num_actions = cfg.num_actions;
  const int n = cfg.samples_per_action;
  int n_sol = static_cast<int>(std::floor(cfg.solitary_fraction * n + 0.5));
  if (n_sol >= n) n_sol = n - 1;  // every action must keep a paired instance
  if (n_sol < 0) n_sol = 0;

  for (int action = 0; action < cfg.num_actions; ++action) {
    const detail::MotionFamily fam = detail::motion_family(action);
    for (int i = 0; i < n; ++i) {
      const int instance_index = action * n + i;
      const std::string id = "synth-c" + std::to_string(action) + "-i" + std::to_string(i);
      const auto jit = detail::draw_instance_jitter(cfg.seed, instance_index);
      SkeletonSequence low = detail::render_motion(cfg.student_schema, action, cfg.frame_length,
                                                   fam, jit, id, Quality::low);
      detail::degrade_low_quality(low, student_graph, cfg.lowq_noise_std, cfg.lowq_joint_drop,
                                  cfg.seed, instance_index);
      const bool solitary = i >= n - n_sol;
      if (solitary) {
        ds.solitary.push_back(std::move(low));
      } else {
        SkeletonSequence high = detail::render_motion(cfg.teacher_schema, action,
                                                      cfg.frame_length, fam, jit, id,
                                                      Quality::high);
        ds.paired.push_back({std::move(high), std::move(low)});
      }
    }
  }
  ds.validate();
  return ds;
}

}  // namespace partkd
