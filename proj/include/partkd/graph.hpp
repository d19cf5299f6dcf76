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
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/schema_data.hpp"
#include "partkd/tensor.hpp"

namespace partkd {

inline constexpr int kNumParts = 5;
inline constexpr std::array<const char*, kNumParts> kPartNames = {
    "head", "left_arm", "right_arm", "left_leg", "right_leg"};

// Joint topology of one skeleton schema. Edges are the physical bone links;
// self-loops are introduced only during adjacency normalization.
struct SkeletonGraph {
  std::string schema_id;
  int V = 0;
  std::vector<std::string> joints;
  std::vector<std::pair<int, int>> edges;
  // 2 for (x, y, confidence) coordinate channels, 3 for (x, y, z).
  int dims = 3;
  // Reference joint for input centering and the spatial partition.
  int center_joint = 0;
};

// Assignment of every joint of a schema to one of the five body parts.
struct PartMap {
  std::string schema_id;
  std::array<std::vector<int>, kNumParts> parts;

  int part_of(int joint) const {
    for (int p = 0; p < kNumParts; ++p)
      for (int j : parts[p])
        if (j == joint) return p;
    return -1;
  }
};

// Stack of K normalized V x V adjacency matrices, one per partition subset.
struct AdjacencyStack {
  int K = 0;
  int V = 0;
  std::vector<Tensor> mats;  // each (V, V)
};

namespace detail {

inline std::vector<int> hop_distances(const SkeletonGraph& g, int source) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.V));
  for (auto [a, b] : g.edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<int> dist(static_cast<std::size_t>(g.V), -1);
  std::deque<int> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push_back(source);
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        q.push_back(v);
      }
    }
  }
  return dist;
}

inline void validate_schema(const SkeletonGraph& g, const PartMap& pm) {
  if (g.V <= 0) throw ValidationError("schema '" + g.schema_id + "': V must be positive");
  if (static_cast<int>(g.joints.size()) != g.V)
    throw ValidationError("schema '" + g.schema_id + "': joint name count != V");
  if (g.dims != 2 && g.dims != 3)
    throw ValidationError("schema '" + g.schema_id + "': dims must be 2 or 3");
  if (g.center_joint < 0 || g.center_joint >= g.V)
    throw ValidationError("schema '" + g.schema_id + "': center joint out of range");
  for (auto [a, b] : g.edges) {
    if (a < 0 || a >= g.V || b < 0 || b >= g.V)
      throw ValidationError("schema '" + g.schema_id + "': edge index out of range");
    if (a == b) throw ValidationError("schema '" + g.schema_id + "': self-loop in edge list");
  }
  auto dist = hop_distances(g, 0);
  for (int v = 0; v < g.V; ++v)
    if (dist[static_cast<std::size_t>(v)] < 0)
      throw ValidationError("schema '" + g.schema_id + "': graph is not connected");

  std::vector<int> seen(static_cast<std::size_t>(g.V), 0);
  for (int p = 0; p < kNumParts; ++p) {
    if (pm.parts[static_cast<std::size_t>(p)].empty())
      throw ValidationError("schema '" + g.schema_id + "': part '" +
                            kPartNames[static_cast<std::size_t>(p)] + "' is empty");
    for (int j : pm.parts[static_cast<std::size_t>(p)]) {
      if (j < 0 || j >= g.V)
        throw ValidationError("schema '" + g.schema_id + "': part joint out of range");
      if (seen[static_cast<std::size_t>(j)]++)
        throw ValidationError("schema '" + g.schema_id + "': joint assigned to two parts");
    }
  }
  for (int v = 0; v < g.V; ++v)
    if (!seen[static_cast<std::size_t>(v)])
      throw ValidationError("schema '" + g.schema_id + "': joint " + std::to_string(v) +
                            " not covered by any part");
}

inline std::pair<SkeletonGraph, PartMap> parse_schema_document(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("schema document: ") + e.what());
  }
  SkeletonGraph g;
  PartMap pm;
  try {
    g.schema_id = doc.at("schema_id").get<std::string>();
    g.dims = doc.at("dims").get<int>();
    g.center_joint = doc.at("center_joint").get<int>();
    g.joints = doc.at("joints").get<std::vector<std::string>>();
    g.V = static_cast<int>(g.joints.size());
    for (const auto& e : doc.at("edges"))
      g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    pm.schema_id = g.schema_id;
    for (int p = 0; p < kNumParts; ++p)
      pm.parts[static_cast<std::size_t>(p)] =
          doc.at("parts").at(kPartNames[static_cast<std::size_t>(p)]).get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("schema document: ") + e.what());
  }
  validate_schema(g, pm);
  return {std::move(g), std::move(pm)};
}

struct SchemaRegistry {
  std::map<std::string, std::pair<SkeletonGraph, PartMap>> entries;
  std::mutex mu;

  SchemaRegistry() {
    for (auto text : k_builtin_schemas) {
      auto parsed = parse_schema_document(std::string(text));
      entries.emplace(parsed.first.schema_id, parsed);
    }
  }

  static SchemaRegistry& instance() {
    static SchemaRegistry reg;
    return reg;
  }
};

}  // namespace detail

// Registers a schema from a JSON document (same format as resources/schemas/).
// Replaces any schema of the same id.
inline void register_schema_document(const std::string& text) {
  auto parsed = detail::parse_schema_document(text);
  auto& reg = detail::SchemaRegistry::instance();
  std::lock_guard<std::mutex> lock(reg.mu);
  reg.entries[parsed.first.schema_id] = std::move(parsed);
}

inline void register_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open schema file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  register_schema_document(ss.str());
}

inline SkeletonGraph build_graph(const std::string& schema_id) {
  auto& reg = detail::SchemaRegistry::instance();
  std::lock_guard<std::mutex> lock(reg.mu);
  auto it = reg.entries.find(schema_id);
  if (it == reg.entries.end()) throw UnknownSchema("unknown schema: " + schema_id);
  return it->second.first;
}

inline PartMap build_part_map(const std::string& schema_id) {
  auto& reg = detail::SchemaRegistry::instance();
  std::lock_guard<std::mutex> lock(reg.mu);
  auto it = reg.entries.find(schema_id);
  if (it == reg.entries.end()) throw UnknownSchema("unknown schema: " + schema_id);
  return it->second.second;
}

// Symmetric normalization D^{-1/2} (A + I) D^{-1/2} of the bone graph.
// All partition strategies split this matrix elementwise, so the stack
// always sums back to the uniform normalization.
//
//   uniform  : K=1, the whole matrix
//   distance : K=2, {self-loops, one-hop neighbors}
//   spatial  : K=3, {same-distance-to-center, centripetal, centrifugal}
inline AdjacencyStack normalized_adjacency(const SkeletonGraph& graph,
                                           const std::string& strategy) {
  const int V = graph.V;
  Tensor base({V, V});
  std::vector<double> degree(static_cast<std::size_t>(V), 1.0);  // self-loop counts
  for (auto [a, b] : graph.edges) {
    base.at2(a, b) = 1.0;
    base.at2(b, a) = 1.0;
    degree[static_cast<std::size_t>(a)] += 1.0;
    degree[static_cast<std::size_t>(b)] += 1.0;
  }
  for (int v = 0; v < V; ++v) base.at2(v, v) = 1.0;
  for (int i = 0; i < V; ++i)
    for (int j = 0; j < V; ++j)
      base.at2(i, j) /= std::sqrt(degree[static_cast<std::size_t>(i)] *
                                  degree[static_cast<std::size_t>(j)]);

  AdjacencyStack stack;
  stack.V = V;
  if (strategy == "uniform") {
    stack.K = 1;
    stack.mats.push_back(base);
    return stack;
  }
  if (strategy == "distance") {
    stack.K = 2;
    stack.mats.assign(2, Tensor({V, V}));
    for (int i = 0; i < V; ++i)
      for (int j = 0; j < V; ++j)
        stack.mats[i == j ? 0 : 1].at2(i, j) = base.at2(i, j);
    return stack;
  }
  if (strategy == "spatial") {
    stack.K = 3;
    stack.mats.assign(3, Tensor({V, V}));
    auto dist = detail::hop_distances(graph, graph.center_joint);
    // Entry (u, v) feeds joint v from neighbor u; compare hop distances
    // to the center joint: equal -> root, closer -> centripetal,
    // farther -> centrifugal.
    for (int u = 0; u < V; ++u) {
      for (int v = 0; v < V; ++v) {
        if (base.at2(u, v) == 0.0) continue;
        int k;
        if (dist[static_cast<std::size_t>(u)] == dist[static_cast<std::size_t>(v)])
          k = 0;
        else if (dist[static_cast<std::size_t>(u)] < dist[static_cast<std::size_t>(v)])
          k = 1;
        else
          k = 2;
        stack.mats[static_cast<std::size_t>(k)].at2(u, v) = base.at2(u, v);
      }
    }
    return stack;
  }
  throw ConfigError("unknown adjacency strategy: " + strategy);
}

}  // namespace partkd
