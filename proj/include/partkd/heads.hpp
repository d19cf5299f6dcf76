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
#include <vector>

#include "partkd/backbone.hpp"
#include "partkd/graph.hpp"
#include "partkd/tensor.hpp"

namespace partkd {

// Five pooled part vectors f_p in R^{C_feat}, indexed by part id.
struct PartFeatureSet {
  std::array<std::vector<double>, kNumParts> vectors;

  std::size_t channels() const { return vectors[0].size(); }
};

struct GlobalFeature {
  std::vector<double> values;
};

struct ProbDist {
  std::vector<double> probs;
};

namespace detail {

inline void check_part_map(const JointFeatureMap& z, const PartMap& pm) {
  std::size_t covered = 0;
  for (const auto& part : pm.parts) {
    covered += part.size();
    for (int j : part)
      if (j < 0 || j >= z.joints())
        throw ShapeError("pool_parts: part joint index out of range for feature map");
  }
  if (covered != static_cast<std::size_t>(z.joints()))
    throw ShapeError("pool_parts: part map covers " + std::to_string(covered) +
                     " joints but the feature map has " + std::to_string(z.joints()));
}

inline std::int64_t pooled_frames(const JointFeatureMap& z, bool masked) {
  if (!masked) return z.t_out();
  return std::max<std::int64_t>(1, std::min<std::int64_t>(z.valid_t, z.t_out()));
}

}  // namespace detail

// Mean of z over the temporal axis and the joints of each part. With
// masked=true only the temporal steps stemming from real (unpadded) frames
// enter the mean; the default follows the fixed-shape pipeline and averages
// everything.
inline PartFeatureSet pool_parts(const JointFeatureMap& z, const PartMap& pm,
                                 bool masked = false) {
  detail::check_part_map(z, pm);
  const std::int64_t c_dim = z.channels(), t_dim = detail::pooled_frames(z, masked),
                     v_dim = z.joints();
  PartFeatureSet out;
  for (int p = 0; p < kNumParts; ++p) {
    auto& f = out.vectors[static_cast<std::size_t>(p)];
    f.assign(static_cast<std::size_t>(c_dim), 0.0);
    const auto& joints = pm.parts[static_cast<std::size_t>(p)];
    for (std::int64_t c = 0; c < c_dim; ++c) {
      double acc = 0.0;
      const double* plane = z.values.data() + c * z.t_out() * v_dim;
      for (std::int64_t t = 0; t < t_dim; ++t)
        for (int j : joints) acc += plane[t * v_dim + j];
      f[static_cast<std::size_t>(c)] =
          acc / (static_cast<double>(t_dim) * static_cast<double>(joints.size()));
    }
  }
  return out;
}

// Scatters d(loss)/d(part features) back onto the joint feature map.
inline void pool_parts_backward(const std::array<std::vector<double>, kNumParts>& df,
                                const PartMap& pm, const JointFeatureMap& z, Tensor& dz,
                                bool masked = false) {
  const std::int64_t c_dim = z.channels(), t_dim = detail::pooled_frames(z, masked),
                     v_dim = z.joints();
  if (!dz.same_shape(z.values)) dz.resize(z.values.shape());
  for (int p = 0; p < kNumParts; ++p) {
    const auto& joints = pm.parts[static_cast<std::size_t>(p)];
    const double scale = 1.0 / (static_cast<double>(t_dim) * static_cast<double>(joints.size()));
    for (std::int64_t c = 0; c < c_dim; ++c) {
      const double g = df[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] * scale;
      if (g == 0.0) continue;
      double* plane = dz.data() + c * z.t_out() * v_dim;
      for (std::int64_t t = 0; t < t_dim; ++t)
        for (int j : joints) plane[t * v_dim + j] += g;
    }
  }
}

// Global average pooling over the temporal and joint axes.
inline GlobalFeature global_pool(const JointFeatureMap& z, bool masked = false) {
  const std::int64_t c_dim = z.channels(), t_dim = detail::pooled_frames(z, masked),
                     v_dim = z.joints();
  GlobalFeature g;
  g.values.assign(static_cast<std::size_t>(c_dim), 0.0);
  for (std::int64_t c = 0; c < c_dim; ++c) {
    double acc = 0.0;
    const double* plane = z.values.data() + c * z.t_out() * v_dim;
    for (std::int64_t t = 0; t < t_dim; ++t)
      for (std::int64_t v = 0; v < v_dim; ++v) acc += plane[t * v_dim + v];
    g.values[static_cast<std::size_t>(c)] =
        acc / (static_cast<double>(t_dim) * static_cast<double>(v_dim));
  }
  return g;
}

inline void global_pool_backward(const std::vector<double>& dg, const JointFeatureMap& z,
                                 Tensor& dz, bool masked = false) {
  const std::int64_t c_dim = z.channels(), t_dim = detail::pooled_frames(z, masked),
                     v_dim = z.joints();
  if (!dz.same_shape(z.values)) dz.resize(z.values.shape());
  const double denom = static_cast<double>(t_dim) * static_cast<double>(v_dim);
  for (std::int64_t c = 0; c < c_dim; ++c) {
    const double g = dg[static_cast<std::size_t>(c)] / denom;
    double* plane = dz.data() + c * z.t_out() * v_dim;
    for (std::int64_t t = 0; t < t_dim; ++t)
      for (std::int64_t v = 0; v < v_dim; ++v) plane[t * v_dim + v] += g;
  }
}

// ---------------------------------------------------------------- classifier

inline std::vector<double> classify_logits(const GlobalFeature& g, const Tensor& w,
                                           const Tensor& b) {
  const std::int64_t actions = w.dim(0), c_dim = w.dim(1);
  if (static_cast<std::int64_t>(g.values.size()) != c_dim)
    throw ShapeError("classify: feature dimension mismatch");
  std::vector<double> logits(static_cast<std::size_t>(actions));
  for (std::int64_t a = 0; a < actions; ++a) {
    double acc = b[a];
    const double* row = w.data() + a * c_dim;
    for (std::int64_t c = 0; c < c_dim; ++c) acc += row[c] * g.values[static_cast<std::size_t>(c)];
    logits[static_cast<std::size_t>(a)] = acc;
  }
  return logits;
}

inline ProbDist softmax(const std::vector<double>& logits) {
  ProbDist out;
  out.probs.resize(logits.size());
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] - m);
    z += out.probs[i];
  }
  for (auto& p : out.probs) p /= z;
  return out;
}

// Affine map plus softmax.
inline ProbDist classify(const GlobalFeature& g, const Tensor& w, const Tensor& b) {
  return softmax(classify_logits(g, w, b));
}

// Mean over the batch of -log(probability at the true class).
inline double cross_entropy(const std::vector<ProbDist>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw ShapeError("cross_entropy: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i].probs[static_cast<std::size_t>(labels[i])];
    total += -std::log(std::max(p, 1e-300));
  }
  return total / static_cast<double>(probs.size());
}

// Numerically stable cross entropy straight from logits. When dlogits is
// given it receives (softmax - onehot) / batch per sample.
inline double cross_entropy_from_logits(const std::vector<std::vector<double>>& logits,
                                        const std::vector<int>& labels,
                                        std::vector<std::vector<double>>* dlogits = nullptr) {
  if (logits.size() != labels.size() || logits.empty())
    throw ShapeError("cross_entropy: batch size mismatch");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  if (dlogits) dlogits->assign(logits.size(), {});
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& l = logits[i];
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= l.size())
      throw ShapeError("cross_entropy: label out of range");
    double m = l[0];
    for (double v : l) m = std::max(m, v);
    double z = 0.0;
    for (double v : l) z += std::exp(v - m);
    total += (m + std::log(z)) - l[static_cast<std::size_t>(y)];
    if (dlogits) {
      auto& d = (*dlogits)[i];
      d.resize(l.size());
      for (std::size_t a = 0; a < l.size(); ++a) d[a] = std::exp(l[a] - m) / z * inv_n;
      d[static_cast<std::size_t>(y)] -= inv_n;
    }
  }
  return total * inv_n;
}

// d(loss)/d(features and head parameters) for one sample's logit gradient.
inline void classify_backward(const std::vector<double>& dlogits, const GlobalFeature& g,
                              const Tensor& w, std::vector<double>& dg, Tensor& dw, Tensor& db) {
  const std::int64_t actions = w.dim(0), c_dim = w.dim(1);
  dg.assign(static_cast<std::size_t>(c_dim), 0.0);
  for (std::int64_t a = 0; a < actions; ++a) {
    const double d = dlogits[static_cast<std::size_t>(a)];
    db[a] += d;
    double* dwr = dw.data() + a * c_dim;
    const double* wr = w.data() + a * c_dim;
    for (std::int64_t c = 0; c < c_dim; ++c) {
      dwr[c] += d * g.values[static_cast<std::size_t>(c)];
      dg[static_cast<std::size_t>(c)] += d * wr[c];
    }
  }
}

}  // namespace partkd
