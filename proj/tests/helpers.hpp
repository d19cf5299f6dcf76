#pragma once

// Shared toy fixtures for the unit suites.

#include <vector>

#include "partkd/backbone.hpp"
#include "partkd/graph.hpp"
#include "partkd/sequence.hpp"

namespace partkd::testing {

// Chain graph 0-1-...-V-1.
inline SkeletonGraph toy_graph(int V, int dims = 3) {
  SkeletonGraph g;
  g.schema_id = "toy" + std::to_string(V);
  g.V = V;
  g.dims = dims;
  g.center_joint = 0;
  for (int i = 0; i < V; ++i) {
    g.joints.push_back("j" + std::to_string(i));
    if (i > 0) g.edges.emplace_back(i - 1, i);
  }
  return g;
}

// Splits [0, V) into five contiguous parts (V >= 5).
inline PartMap toy_parts(int V) {
  PartMap pm;
  pm.schema_id = "toy" + std::to_string(V);
  for (int p = 0; p < kNumParts; ++p) {
    const int lo = p * V / kNumParts;
    const int hi = (p + 1) * V / kNumParts;
    for (int j = lo; j < hi; ++j) pm.parts[static_cast<std::size_t>(p)].push_back(j);
  }
  return pm;
}

inline Model toy_model(const BackboneConfig& cfg, const SkeletonGraph& graph, int num_actions,
                       int frames, std::uint64_t seed) {
  Model m;
  m.cfg = cfg;
  m.graph = graph;
  m.adj = normalized_adjacency(graph, cfg.partition_strategy);
  m.params = init_params(cfg, graph, seed);
  init_head_params(m.params, cfg.feature_channels(), num_actions, seed);
  m.num_actions = num_actions;
  m.frames = frames;
  return m;
}

// Random dense input on body 0 (body 1 stays absent unless two_bodies).
inline ModelInput random_input(int frames, int V, std::uint64_t seed, bool two_bodies = false) {
  ModelInput in;
  in.instance_id = "rand";
  in.schema_id = "toy";
  in.label = 0;
  in.V = V;
  in.frames = frames;
  in.valid_frames = frames;
  in.coords.assign(static_cast<std::size_t>(3 * frames * V * kModelBodies), 0.0);
  auto rng = rng_stream(seed, "random_input");
  const int bodies = two_bodies ? 2 : 1;
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < frames; ++t)
      for (int v = 0; v < V; ++v)
        for (int m = 0; m < bodies; ++m)
          in.at(c, t, v, m) = gaussian(rng) * 0.5 + 0.1;
  return in;
}

}  // namespace partkd::testing
