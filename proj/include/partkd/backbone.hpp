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

// Reference feature extractor: a stack of blocks alternating spatial graph
// convolution and temporal convolution with residual connections,
//
//   x -> spatial graph conv -> norm -> relu
//     -> temporal conv (k, stride) -> norm -> (+ residual) -> relu
//
// per body; per-body maps are averaged over the bodies that are actually
// present. Normalization is per-sample channel normalization, so a sample's
// features never depend on the rest of the batch.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/graph.hpp"
#include "partkd/nn.hpp"
#include "partkd/sequence.hpp"
#include "partkd/tensor.hpp"

namespace partkd {

struct BackboneConfig {
  int num_blocks = 9;
  std::vector<int> channel_plan = {64, 64, 64, 64, 128, 128, 128, 256, 256};
  int temporal_kernel = 9;
  std::vector<int> temporal_strides = {1, 1, 1, 1, 2, 1, 1, 2, 1};
  std::string partition_strategy = "spatial";
  int input_channels = 3;

  // Small stack for desk-scale experiments.
  static BackboneConfig fast_profile() {
    BackboneConfig cfg;
    cfg.num_blocks = 3;
    cfg.channel_plan = {8, 16, 16};
    cfg.temporal_strides = {1, 2, 1};
    return cfg;
  }

  void validate() const {
    if (num_blocks < 1) throw ConfigError("backbone: num_blocks must be >= 1");
    if (static_cast<int>(channel_plan.size()) != num_blocks)
      throw ConfigError("backbone: channel_plan length must equal num_blocks");
    if (static_cast<int>(temporal_strides.size()) != num_blocks)
      throw ConfigError("backbone: temporal_strides length must equal num_blocks");
    if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
      throw ConfigError("backbone: temporal_kernel must be odd");
    if (input_channels != kInputChannels)
      throw ConfigError("backbone: input_channels must be 3");
    for (int c : channel_plan)
      if (c < 1) throw ConfigError("backbone: channels must be positive");
    for (int s : temporal_strides)
      if (s < 1) throw ConfigError("backbone: strides must be positive");
    if (partition_strategy != "uniform" && partition_strategy != "distance" &&
        partition_strategy != "spatial")
      throw ConfigError("backbone: unknown partition strategy '" + partition_strategy + "'");
  }

  int feature_channels() const { return channel_plan.back(); }

  int subset_count() const {
    if (partition_strategy == "uniform") return 1;
    if (partition_strategy == "distance") return 2;
    return 3;
  }

  // Output length of the temporal axis after the whole stride plan;
  // each block maps t -> ceil(t / stride).
  int temporal_out(int t) const {
    const int pad = (temporal_kernel - 1) / 2;
    for (int s : temporal_strides)
      t = static_cast<int>(conv_out_length(t, temporal_kernel, s, pad));
    return t;
  }

  bool operator==(const BackboneConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const BackboneConfig& cfg) {
  j = {{"num_blocks", cfg.num_blocks},
       {"channel_plan", cfg.channel_plan},
       {"temporal_kernel", cfg.temporal_kernel},
       {"temporal_strides", cfg.temporal_strides},
       {"partition_strategy", cfg.partition_strategy},
       {"input_channels", cfg.input_channels}};
}

inline void from_json(const nlohmann::json& j, BackboneConfig& cfg) {
  j.at("num_blocks").get_to(cfg.num_blocks);
  j.at("channel_plan").get_to(cfg.channel_plan);
  j.at("temporal_kernel").get_to(cfg.temporal_kernel);
  j.at("temporal_strides").get_to(cfg.temporal_strides);
  j.at("partition_strategy").get_to(cfg.partition_strategy);
  j.at("input_channels").get_to(cfg.input_channels);
}

// Backbone output for one sample: joint-level features after averaging over
// present bodies.
struct JointFeatureMap {
  Tensor values;  // (C_feat, T_out, V)
  int valid_t = 0;

  std::int64_t channels() const { return values.dim(0); }
  std::int64_t t_out() const { return values.dim(1); }
  std::int64_t joints() const { return values.dim(2); }
};

namespace detail {

inline bool block_has_residual_conv(int c_in, int c_out, int stride) {
  return c_in != c_out || stride != 1;
}

inline std::string block_prefix(int i) { return "block" + std::to_string(i) + "."; }

}  // namespace detail

// Deterministic parameter initialization: He-scaled weights drawn from a
// seeded stream in declaration order, zero biases, unit norm scales, and an
// all-ones edge-importance mask per block.
inline ParamSet init_params(const BackboneConfig& cfg, const SkeletonGraph& graph,
                            std::uint64_t seed) {
  cfg.validate();
  const int K = cfg.subset_count();
  const int V = graph.V;
  auto rng = rng_stream(seed, "backbone_init");
  ParamSet params;

  auto fill_gaussian = [&rng](Tensor& t, double stddev) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = stddev * gaussian(rng);
  };

  int c_in = cfg.input_channels;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const int c_out = cfg.channel_plan[static_cast<std::size_t>(i)];
    const int stride = cfg.temporal_strides[static_cast<std::size_t>(i)];
    const auto p = detail::block_prefix(i);
    fill_gaussian(params.add(p + "spatial.w", {K, c_out, c_in}), std::sqrt(2.0 / c_in));
    params.add(p + "spatial.b", {c_out});
    params.add(p + "norm1.gamma", {c_out}).fill(1.0);
    params.add(p + "norm1.beta", {c_out});
    fill_gaussian(params.add(p + "temporal.w", {cfg.temporal_kernel, c_out, c_out}),
                  std::sqrt(2.0 / (static_cast<double>(c_out) * cfg.temporal_kernel)));
    params.add(p + "temporal.b", {c_out});
    params.add(p + "norm2.gamma", {c_out}).fill(1.0);
    params.add(p + "norm2.beta", {c_out});
    params.add(p + "mask", {K, V, V}).fill(1.0);
    if (detail::block_has_residual_conv(c_in, c_out, stride)) {
      fill_gaussian(params.add(p + "res.w", {1, c_out, c_in}), std::sqrt(2.0 / c_in));
      params.add(p + "res.b", {c_out});
    }
    c_in = c_out;
  }
  return params;
}

// Classifier head on top of the pooled global feature. Small weights keep a
// fresh model's predictions near uniform.
inline void init_head_params(ParamSet& params, int feature_channels, int num_actions,
                             std::uint64_t seed) {
  auto rng = rng_stream(seed, "head_init");
  Tensor& w = params.add("head.w", {num_actions, feature_channels});
  const double stddev = 0.3 * std::sqrt(1.0 / feature_channels);
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = stddev * gaussian(rng);
  params.add("head.b", {num_actions});
}

// Bundles everything a forward pass needs.
struct Model {
  BackboneConfig cfg;
  SkeletonGraph graph;
  AdjacencyStack adj;
  ParamSet params;  // backbone parameters plus head.w / head.b
  int num_actions = 0;
  int frames = kModelFrames;
};

inline Model make_model(const BackboneConfig& cfg, const std::string& schema_id, int num_actions,
                        int frames, std::uint64_t seed) {
  Model m;
  m.cfg = cfg;
  m.graph = build_graph(schema_id);
  m.adj = normalized_adjacency(m.graph, cfg.partition_strategy);
  m.params = init_params(cfg, m.graph, seed);
  init_head_params(m.params, cfg.feature_channels(), num_actions, seed);
  m.num_actions = num_actions;
  m.frames = frames;
  return m;
}

// ---------------------------------------------------------------- forward

struct BlockCache {
  Tensor x_in;
  std::vector<Tensor> lifted;
  ChannelNormCache n1;
  Tensor r1;
  ChannelNormCache n2;
  Tensor y_out;
};

struct BodyCache {
  int body = 0;
  Tensor centered;
  std::vector<BlockCache> blocks;
};

struct SampleCache {
  std::vector<BodyCache> bodies;  // present bodies only
};

namespace detail {

// Copies one body into a (3, T, V) tensor; false when the body is all zero.
inline bool extract_body(const ModelInput& in, int m, Tensor& out) {
  out.resize({kInputChannels, in.frames, in.V});
  bool any = false;
  for (int c = 0; c < kInputChannels; ++c)
    for (int t = 0; t < in.frames; ++t)
      for (int v = 0; v < in.V; ++v) {
        const double x = in.at(c, t, v, m);
        out.at3(c, t, v) = x;
        any = any || x != 0.0;
      }
  return any;
}

// Translates the body so the center joint of the first frame where it is
// observed sits at the origin; when occlusion hides the center joint for
// the whole sequence, the mean of the joints observed in the first usable
// frame anchors the translation instead. Only coordinate channels move (a
// 2D schema's confidence channel stays), and only at (frame, joint)
// positions that hold data, so padded frames and occluded joints remain
// exact zeros.
inline void center_input(Tensor& x, const SkeletonGraph& g) {
  const std::int64_t t_dim = x.dim(1), v_dim = x.dim(2);
  const int root = g.center_joint;
  auto joint_present = [&](std::int64_t t, std::int64_t v) {
    for (int c = 0; c < kInputChannels; ++c)
      if (x.at3(c, t, v) != 0.0) return true;
    return false;
  };

  double offset[3] = {0.0, 0.0, 0.0};
  bool anchored = false;
  for (std::int64_t t = 0; t < t_dim && !anchored; ++t) {
    if (joint_present(t, root)) {
      for (int d = 0; d < g.dims; ++d) offset[d] = x.at3(d, t, root);
      anchored = true;
    }
  }
  if (!anchored) {
    for (std::int64_t t = 0; t < t_dim && !anchored; ++t) {
      int observed = 0;
      for (std::int64_t v = 0; v < v_dim; ++v) {
        if (!joint_present(t, v)) continue;
        for (int d = 0; d < g.dims; ++d) offset[d] += x.at3(d, t, v);
        ++observed;
      }
      if (observed > 0) {
        for (int d = 0; d < g.dims; ++d) offset[d] /= observed;
        anchored = true;
      }
    }
  }
  if (!anchored) return;  // nothing observed at all

  for (std::int64_t t = 0; t < t_dim; ++t) {
    for (std::int64_t v = 0; v < v_dim; ++v) {
      if (!joint_present(t, v)) continue;
      for (int d = 0; d < g.dims; ++d) x.at3(d, t, v) -= offset[d];
    }
  }
}

struct BlockParamRefs {
  const Tensor *w_sp, *b_sp, *g1, *be1, *w_t, *b_t, *g2, *be2, *mask;
  const Tensor *w_r = nullptr, *b_r = nullptr;
};

inline BlockParamRefs block_refs(const ParamSet& params, int i, bool res_conv) {
  const auto p = block_prefix(i);
  BlockParamRefs r{};
  r.w_sp = &params.at(p + "spatial.w");
  r.b_sp = &params.at(p + "spatial.b");
  r.g1 = &params.at(p + "norm1.gamma");
  r.be1 = &params.at(p + "norm1.beta");
  r.w_t = &params.at(p + "temporal.w");
  r.b_t = &params.at(p + "temporal.b");
  r.g2 = &params.at(p + "norm2.gamma");
  r.be2 = &params.at(p + "norm2.beta");
  r.mask = &params.at(p + "mask");
  if (res_conv) {
    r.w_r = &params.at(p + "res.w");
    r.b_r = &params.at(p + "res.b");
  }
  return r;
}

inline Tensor forward_body(const Tensor& centered, const Model& m, BodyCache* cache) {
  const int pad = (m.cfg.temporal_kernel - 1) / 2;
  Tensor x = centered;
  int c_in = m.cfg.input_channels;
  if (cache) cache->blocks.resize(static_cast<std::size_t>(m.cfg.num_blocks));
  for (int i = 0; i < m.cfg.num_blocks; ++i) {
    const int c_out = m.cfg.channel_plan[static_cast<std::size_t>(i)];
    const int stride = m.cfg.temporal_strides[static_cast<std::size_t>(i)];
    const bool res_conv = block_has_residual_conv(c_in, c_out, stride);
    const auto refs = block_refs(m.params, i, res_conv);
    BlockCache* bc = cache ? &cache->blocks[static_cast<std::size_t>(i)] : nullptr;

    Tensor sp = spatial_conv_forward(x, *refs.w_sp, *refs.b_sp, m.adj.mats, *refs.mask,
                                     bc ? &bc->lifted : nullptr);
    Tensor n1 = channel_norm_forward(sp, *refs.g1, *refs.be1, bc ? &bc->n1 : nullptr);
    relu_inplace(n1);
    Tensor tc = temporal_conv_forward(n1, *refs.w_t, *refs.b_t, stride, pad);
    Tensor n2 = channel_norm_forward(tc, *refs.g2, *refs.be2, bc ? &bc->n2 : nullptr);

    if (res_conv) {
      Tensor res = temporal_conv_forward(x, *refs.w_r, *refs.b_r, stride, 0);
      n2.add_scaled(res, 1.0);
    } else {
      n2.add_scaled(x, 1.0);
    }
    relu_inplace(n2);

    if (bc) {
      bc->x_in = std::move(x);
      bc->r1 = std::move(n1);
      bc->y_out = n2;
    }
    x = std::move(n2);
    c_in = c_out;
  }
  return x;
}

}  // namespace detail

// Joint-level features z = F(x): runs every present body through the block
// stack and averages the per-body maps. All-zero inputs yield a zero map.
inline JointFeatureMap forward_features(const ModelInput& input, const Model& model,
                                        SampleCache* cache = nullptr) {
  if (input.V != model.graph.V)
    throw ShapeError("forward_features: input joints " + std::to_string(input.V) +
                     " != model graph V " + std::to_string(model.graph.V));
  model.cfg.validate();
  JointFeatureMap out;
  const int t_out = model.cfg.temporal_out(input.frames);
  out.values.resize({model.cfg.feature_channels(), t_out, input.V});
  out.valid_t = model.cfg.temporal_out(std::max(input.valid_frames, 1));

  std::vector<int> present;
  Tensor body;
  for (int m = 0; m < kModelBodies; ++m) {
    if (!detail::extract_body(input, m, body)) continue;
    present.push_back(m);
  }
  if (present.empty()) return out;

  if (cache) cache->bodies.clear();
  for (int m : present) {
    detail::extract_body(input, m, body);
    detail::center_input(body, model.graph);
    BodyCache* bc = nullptr;
    if (cache) {
      cache->bodies.emplace_back();
      bc = &cache->bodies.back();
      bc->body = m;
      bc->centered = body;
    }
    Tensor z = detail::forward_body(bc ? bc->centered : body, model, bc);
    out.values.add_scaled(z, 1.0 / static_cast<double>(present.size()));
  }
  return out;
}

// Backpropagates d(loss)/d(features) into parameter gradients; optionally
// reports the gradient with respect to the centered per-body inputs.
inline void backbone_backward(const Tensor& dz, const SampleCache& cache, const Model& m,
                              GradBuffer& grads, std::vector<Tensor>* dx_bodies = nullptr) {
  if (cache.bodies.empty()) return;
  const int pad = (m.cfg.temporal_kernel - 1) / 2;
  const double body_scale = 1.0 / static_cast<double>(cache.bodies.size());
  if (dx_bodies) dx_bodies->clear();

  for (const auto& body : cache.bodies) {
    Tensor d = dz;
    for (std::int64_t i = 0; i < d.size(); ++i) d[i] *= body_scale;

    for (int i = m.cfg.num_blocks - 1; i >= 0; --i) {
      const int c_in = i == 0 ? m.cfg.input_channels
                              : m.cfg.channel_plan[static_cast<std::size_t>(i - 1)];
      const int c_out = m.cfg.channel_plan[static_cast<std::size_t>(i)];
      const int stride = m.cfg.temporal_strides[static_cast<std::size_t>(i)];
      const bool res_conv = detail::block_has_residual_conv(c_in, c_out, stride);
      const auto refs = detail::block_refs(m.params, i, res_conv);
      const auto pfx = detail::block_prefix(i);
      const BlockCache& bc = body.blocks[static_cast<std::size_t>(i)];

      Tensor dy = relu_backward(d, bc.y_out);
      Tensor dn2 = channel_norm_backward(dy, bc.n2, *refs.g2,
                                         grads.grads[m.params.index_of(pfx + "norm2.gamma")],
                                         grads.grads[m.params.index_of(pfx + "norm2.beta")]);
      Tensor dr1 = temporal_conv_backward(dn2, bc.r1, *refs.w_t, stride, pad,
                                          grads.grads[m.params.index_of(pfx + "temporal.w")],
                                          grads.grads[m.params.index_of(pfx + "temporal.b")]);
      Tensor dn1 = relu_backward(dr1, bc.r1);
      Tensor dsp = channel_norm_backward(dn1, bc.n1, *refs.g1,
                                         grads.grads[m.params.index_of(pfx + "norm1.gamma")],
                                         grads.grads[m.params.index_of(pfx + "norm1.beta")]);
      Tensor dx = spatial_conv_backward(dsp, bc.x_in, bc.lifted, *refs.w_sp, m.adj.mats,
                                        *refs.mask,
                                        grads.grads[m.params.index_of(pfx + "spatial.w")],
                                        grads.grads[m.params.index_of(pfx + "spatial.b")],
                                        grads.grads[m.params.index_of(pfx + "mask")]);
      if (res_conv) {
        Tensor dres = temporal_conv_backward(dy, bc.x_in, *refs.w_r, stride, 0,
                                             grads.grads[m.params.index_of(pfx + "res.w")],
                                             grads.grads[m.params.index_of(pfx + "res.b")]);
        dx.add_scaled(dres, 1.0);
      } else {
        dx.add_scaled(dy, 1.0);
      }
      d = std::move(dx);
    }
    if (dx_bodies) dx_bodies->push_back(std::move(d));
  }
}

// ---------------------------------------------------------------- checkpoint

// Versioned container: magic, version, JSON header (schema, action count,
// frame budget, backbone config echo, tensor index), then raw doubles.
struct Checkpoint {
  BackboneConfig cfg;
  std::string schema_id;
  int num_actions = 0;
  int frames = kModelFrames;
  ParamSet params;
};

inline Checkpoint to_checkpoint(const Model& m) {
  Checkpoint ck;
  ck.cfg = m.cfg;
  ck.schema_id = m.graph.schema_id;
  ck.num_actions = m.num_actions;
  ck.frames = m.frames;
  ck.params = m.params;
  return ck;
}

inline Model to_model(const Checkpoint& ck) {
  Model m;
  m.cfg = ck.cfg;
  m.graph = build_graph(ck.schema_id);
  m.adj = normalized_adjacency(m.graph, ck.cfg.partition_strategy);
  m.params = ck.params;
  m.num_actions = ck.num_actions;
  m.frames = ck.frames;
  return m;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json header;
  header["schema_id"] = ck.schema_id;
  header["num_actions"] = ck.num_actions;
  header["frames"] = ck.frames;
  header["config"] = ck.cfg;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ck.params.size(); ++i)
    tensors.push_back({{"name", ck.params[i].name}, {"shape", ck.params[i].value.shape()}});
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open checkpoint for writing: " + path);
  out.write("PKCK", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const Tensor& t = ck.params[i].value;
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IOError("checkpoint write failure: " + path);
}

// Loads and cross-checks the stored tensor index against the stored config;
// when `expected` is given, refuses configs that do not match it.
inline Checkpoint load_checkpoint(const std::string& path,
                                  const BackboneConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PKCK", 4) != 0)
    throw MalformedRecord("checkpoint '" + path + "': bad magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1)
    throw MalformedRecord("checkpoint '" + path + "': unsupported version " +
                          std::to_string(version));
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (static_cast<std::uint64_t>(in.gcount()) != head_len)
    throw MalformedRecord("checkpoint '" + path + "': truncated header");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(head);
    ck.schema_id = header.at("schema_id").get<std::string>();
    ck.num_actions = header.at("num_actions").get<int>();
    ck.frames = header.at("frames").get<int>();
    ck.cfg = header.at("config").get<BackboneConfig>();
    for (const auto& rec : header.at("tensors")) {
      Tensor& t = ck.params.add(rec.at("name").get<std::string>(),
                                rec.at("shape").get<std::vector<std::int64_t>>());
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in) throw MalformedRecord("checkpoint '" + path + "': truncated tensor data");
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord("checkpoint '" + path + "': " + e.what());
  }

  if (expected && !(ck.cfg == *expected))
    throw ConfigError("checkpoint '" + path + "' does not match the expected backbone config");

  // The stored tensors must agree with the stored config echo.
  ParamSet reference = init_params(ck.cfg, build_graph(ck.schema_id), 0);
  init_head_params(reference, ck.cfg.feature_channels(), ck.num_actions, 0);
  if (reference.size() != ck.params.size())
    throw ConfigError("checkpoint '" + path + "': tensor count does not match its config echo");
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i].name != ck.params[i].name ||
        !(reference[i].value.shape() == ck.params[i].value.shape()))
      throw ConfigError("checkpoint '" + path + "': tensor '" + ck.params[i].name +
                        "' does not match its config echo");
  }
  return ck;
}

}  // namespace partkd
