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

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/graph.hpp"

namespace partkd {

inline constexpr int kInputChannels = 3;

enum class Quality : std::uint8_t { high = 0, low = 1 };

inline const char* to_string(Quality q) { return q == Quality::high ? "high" : "low"; }

// Raw coordinates of one action instance. Coordinates are stored as 32-bit
// floats in (C_in, T_raw, V, M_bodies) row-major order; 3D schemas carry
// (x, y, z), 2D schemas (x, y, confidence). Absent bodies and frames are
// exact zeros.
struct SkeletonSequence {
  std::string instance_id;
  std::string schema_id;
  int label = 0;
  Quality quality = Quality::high;
  int length = 0;  // T_raw
  int bodies = 1;  // M_bodies in {1, 2}
  int V = 0;
  std::vector<float> coords;  // (kInputChannels, length, V, bodies)

  std::size_t index(int c, int t, int v, int m) const {
    return static_cast<std::size_t>(((c * length + t) * V + v) * bodies + m);
  }
  float& at(int c, int t, int v, int m) { return coords[index(c, t, v, m)]; }
  float at(int c, int t, int v, int m) const { return coords[index(c, t, v, m)]; }

  void allocate() {
    coords.assign(static_cast<std::size_t>(kInputChannels) * static_cast<std::size_t>(length) *
                      static_cast<std::size_t>(V) * static_cast<std::size_t>(bodies),
                  0.0f);
  }

  void validate() const {
    if (length < 0) throw ValidationError("sequence '" + instance_id + "': negative length");
    if (bodies != 1 && bodies != 2)
      throw ValidationError("sequence '" + instance_id + "': bodies must be 1 or 2");
    if (coords.size() != static_cast<std::size_t>(kInputChannels) *
                             static_cast<std::size_t>(length) * static_cast<std::size_t>(V) *
                             static_cast<std::size_t>(bodies))
      throw ValidationError("sequence '" + instance_id + "': coordinate buffer size mismatch");
    for (float v : coords)
      if (!std::isfinite(v))
        throw ValidationError("sequence '" + instance_id + "': non-finite coordinate");
  }
};

// Training collection: paired (high, low) instances plus solitary low-quality
// instances that have no high-quality match.
struct Dataset {
  struct Pair {
    SkeletonSequence high;
    SkeletonSequence low;
  };
  std::vector<Pair> paired;
  std::vector<SkeletonSequence> solitary;
  int num_actions = 0;

  void validate() const {
    if (num_actions < 1) throw ValidationError("dataset: num_actions must be positive");
    std::set<int> paired_labels;
    for (const auto& p : paired) {
      if (p.high.instance_id != p.low.instance_id)
        throw ValidationError("dataset: paired members with different instance ids");
      if (p.high.label != p.low.label)
        throw ValidationError("dataset: paired members with different labels");
      if (p.high.quality != Quality::high || p.low.quality != Quality::low)
        throw ValidationError("dataset: paired members with wrong quality tags");
      if (p.high.label < 0 || p.high.label >= num_actions)
        throw ValidationError("dataset: label out of range");
      paired_labels.insert(p.high.label);
    }
    for (const auto& s : solitary) {
      if (s.quality != Quality::low)
        throw ValidationError("dataset: solitary sequence must be low quality");
      if (s.label < 0 || s.label >= num_actions)
        throw ValidationError("dataset: label out of range");
    }
    for (int c = 0; c < num_actions; ++c)
      if (!paired_labels.count(c))
        throw ValidationError("dataset: action " + std::to_string(c) +
                              " has no paired instance");
  }
};

// Fixed-shape network input: (3, kModelFrames, V, kModelBodies) doubles.
inline constexpr int kModelFrames = 300;
inline constexpr int kModelBodies = 2;

struct ModelInput {
  std::string instance_id;
  std::string schema_id;
  int label = 0;
  int V = 0;
  int frames = kModelFrames;  // fast profiles shrink the temporal axis
  int valid_frames = 0;       // frames copied from the source sequence
  std::vector<double> coords; // (3, frames, V, kModelBodies)

  std::size_t index(int c, int t, int v, int m) const {
    return static_cast<std::size_t>(((c * frames + t) * V + v) * kModelBodies + m);
  }
  double& at(int c, int t, int v, int m) { return coords[index(c, t, v, m)]; }
  double at(int c, int t, int v, int m) const { return coords[index(c, t, v, m)]; }
};

// Pads or truncates a sequence to a fixed (3, frames, V, 2) block. Excess
// frames are dropped, shorter sequences and absent bodies are zero-padded;
// copied values are bit-identical to the source.
inline ModelInput pad_or_truncate(const SkeletonSequence& seq, int frames = kModelFrames) {
  if (seq.length == 0) throw EmptySequence("sequence '" + seq.instance_id + "' has no frames");
  if (frames <= 0) throw ConfigError("frame budget must be positive");
  ModelInput out;
  out.instance_id = seq.instance_id;
  out.schema_id = seq.schema_id;
  out.label = seq.label;
  out.V = seq.V;
  out.frames = frames;
  out.valid_frames = std::min(seq.length, frames);
  out.coords.assign(static_cast<std::size_t>(kInputChannels) * static_cast<std::size_t>(frames) *
                        static_cast<std::size_t>(seq.V) * kModelBodies,
                    0.0);
  for (int c = 0; c < kInputChannels; ++c)
    for (int t = 0; t < out.valid_frames; ++t)
      for (int v = 0; v < seq.V; ++v)
        for (int m = 0; m < seq.bodies; ++m)
          out.at(c, t, v, m) = static_cast<double>(seq.at(c, t, v, m));
  return out;
}

// Zeroes each (joint, body) channel independently with probability p, across
// all frames and coordinate channels. The mask is drawn once per call, so a
// joint is either fully present or fully absent. Deterministic given seed.
inline SkeletonSequence occlude_joints(const SkeletonSequence& seq, double p,
                                       std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("occlusion probability must be in [0,1]");
  SkeletonSequence out = seq;
  if (p == 0.0) return out;
  auto rng = rng_stream(seed, "occlude_joints");
  for (int v = 0; v < seq.V; ++v) {
    for (int m = 0; m < seq.bodies; ++m) {
      if (u01(rng) >= p) continue;
      for (int c = 0; c < kInputChannels; ++c)
        for (int t = 0; t < seq.length; ++t)
          out.at(c, t, v, m) = 0.0f;
    }
  }
  return out;
}

// Zeroes every joint of one body part across all frames and bodies.
inline SkeletonSequence occlude_part(const SkeletonSequence& seq, const PartMap& part_map,
                                     int part_id) {
  if (part_id < 0 || part_id >= kNumParts)
    throw ConfigError("part id must be in [0,5): got " + std::to_string(part_id));
  SkeletonSequence out = seq;
  for (int v : part_map.parts[static_cast<std::size_t>(part_id)]) {
    for (int c = 0; c < kInputChannels; ++c)
      for (int t = 0; t < seq.length; ++t)
        for (int m = 0; m < seq.bodies; ++m)
          out.at(c, t, v, m) = 0.0f;
  }
  return out;
}

}  // namespace partkd
