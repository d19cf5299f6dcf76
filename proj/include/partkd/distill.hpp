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

// Part-based skeleton matching: a low-quality sample is pulled toward
// high-quality samples of its own action and pushed from the rest, with the
// per-part cosine similarities weighted by that action's efficiency-matrix
// row. Paired samples additionally anchor on their own high-quality match;
// solitary samples rely on the class positives alone.

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/heads.hpp"
#include "partkd/part_matrix.hpp"
#include "partkd/sequence.hpp"

namespace partkd {

struct DistillConfig {
  double w = 0.5;       // weight of the positive-pool similarity
  double alpha = 1.0;   // balance between classification and matching loss
  int batch_low = 16;
  int batch_high = 16;
  double epsilon_cos = 1e-12;

  void validate() const {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("distill: w must be in [0,1]");
    if (alpha < 0.0) throw ConfigError("distill: alpha must be >= 0");
    if (batch_low < 1 || batch_high < 1) throw ConfigError("distill: batch sizes must be >= 1");
    if (epsilon_cos <= 0.0) throw ConfigError("distill: epsilon_cos must be positive");
  }
};

// One mini-batch: a low-quality batch plus a high-quality batch, with the
// paired-instance links resolved through pair keys.
struct DistillBatch {
  struct LowItem {
    std::shared_ptr<const ModelInput> input;
    int label = 0;
    bool paired = false;
    std::string pair_key;
  };
  struct HighItem {
    std::shared_ptr<const ModelInput> input;
    int label = 0;
    std::string pair_key;
  };

  std::vector<LowItem> low_items;
  std::vector<HighItem> high_items;

  int high_index_of(const std::string& key) const {
    for (std::size_t j = 0; j < high_items.size(); ++j)
      if (high_items[j].pair_key == key) return static_cast<int>(j);
    return -1;
  }
};

// Part features for every batch member, low side from the student and high
// side from the frozen teacher.
struct BatchFeatures {
  std::vector<PartFeatureSet> low;
  std::vector<PartFeatureSet> high;
};

// ---------------------------------------------------------------- similarity

struct PartSimilarity {
  double phi = 0.0;    // weighted sum of per-part cosines, in [-1, 1]
  double value = 0.0;  // exp(phi)
};

namespace detail {

inline double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// Eq.-level similarity: phi = sum_p cos(fL_p, fH_p) * e_row[p], C = exp(phi).
// Zero-norm part vectors are guarded by epsilon_cos and contribute zero.
inline PartSimilarity part_similarity(const PartFeatureSet& f_low, const PartFeatureSet& f_high,
                                      const std::vector<double>& e_row,
                                      double epsilon_cos = 1e-12) {
  if (e_row.size() != kNumParts)
    throw ShapeError("part_similarity: efficiency row must have 5 entries");
  PartSimilarity out;
  for (int p = 0; p < kNumParts; ++p) {
    const auto& a = f_low.vectors[static_cast<std::size_t>(p)];
    const auto& b = f_high.vectors[static_cast<std::size_t>(p)];
    if (a.size() != b.size()) throw ShapeError("part_similarity: feature dimension mismatch");
    const double denom = detail::vec_norm(a) * detail::vec_norm(b) + epsilon_cos;
    out.phi += detail::vec_dot(a, b) / denom * e_row[static_cast<std::size_t>(p)];
  }
  out.value = std::exp(out.phi);
  return out;
}

// ---------------------------------------------------------------- sets

struct PosNegSets {
  std::vector<int> positives;  // same label, own pair excluded
  std::vector<int> negatives;  // different label
};

inline PosNegSets positive_negative_sets(const DistillBatch& batch, int i) {
  const auto& low = batch.low_items[static_cast<std::size_t>(i)];
  PosNegSets sets;
  for (std::size_t j = 0; j < batch.high_items.size(); ++j) {
    const auto& high = batch.high_items[j];
    if (high.label == low.label) {
      if (low.paired && high.pair_key == low.pair_key) continue;  // its own match
      sets.positives.push_back(static_cast<int>(j));
    } else {
      sets.negatives.push_back(static_cast<int>(j));
    }
  }
  return sets;
}

// ---------------------------------------------------------------- loss

struct SampleLoss {
  double value = 0.0;
  bool skipped = false;   // solitary sample without positives
  bool solitary = false;  // scored through the solitary branch
};

namespace detail {

struct SampleTerms {
  double own = 0.0;     // C(x_i, x_i^H), paired branch only
  double pos = 0.0;     // mean over B_P, 0 when empty
  double neg = 0.0;     // mean over B_N
  int own_index = -1;
  PosNegSets sets;
  std::vector<double> sim;  // C(x_i, x_j^H) per high item
  bool skipped = false;
  bool solitary = false;
};

inline SampleTerms sample_terms(int i, const DistillBatch& batch, const BatchFeatures& feats,
                                const EfficiencyMatrix& matrix, const DistillConfig& cfg) {
  const auto& low = batch.low_items[static_cast<std::size_t>(i)];
  SampleTerms terms;
  terms.solitary = !low.paired;
  terms.sets = positive_negative_sets(batch, i);
  if (terms.sets.negatives.empty())
    throw SamplerError("sample_loss: negative set is empty; sampler contract violated");

  const auto e_row = matrix.row(low.label);
  terms.sim.resize(batch.high_items.size());
  for (std::size_t j = 0; j < batch.high_items.size(); ++j)
    terms.sim[j] = part_similarity(feats.low[static_cast<std::size_t>(i)], feats.high[j], e_row,
                                   cfg.epsilon_cos)
                       .value;

  if (low.paired) {
    terms.own_index = batch.high_index_of(low.pair_key);
    if (terms.own_index < 0)
      throw SamplerError("sample_loss: paired item's match is missing from the high batch");
    terms.own = terms.sim[static_cast<std::size_t>(terms.own_index)];
  } else if (terms.sets.positives.empty()) {
    terms.skipped = true;
    return terms;
  }
  for (int j : terms.sets.positives) terms.pos += terms.sim[static_cast<std::size_t>(j)];
  if (!terms.sets.positives.empty()) terms.pos /= static_cast<double>(terms.sets.positives.size());
  for (int j : terms.sets.negatives) terms.neg += terms.sim[static_cast<std::size_t>(j)];
  terms.neg /= static_cast<double>(terms.sets.negatives.size());
  return terms;
}

}  // namespace detail

// Per-sample matching loss. Paired branch scores
//   -log((C_own + w * C_P) / (C_own + w * C_P + C_N));
// solitary samples drop the own term and are skipped when no positive
// exists in the batch.
inline SampleLoss sample_loss(int i, const DistillBatch& batch, const BatchFeatures& feats,
                              const EfficiencyMatrix& matrix, const DistillConfig& cfg) {
  cfg.validate();
  const auto terms = detail::sample_terms(i, batch, feats, matrix, cfg);
  SampleLoss out;
  out.solitary = terms.solitary;
  if (terms.skipped) {
    out.skipped = true;
    return out;
  }
  const double numerator =
      terms.solitary ? cfg.w * terms.pos : terms.own + cfg.w * terms.pos;
  out.value = std::log(numerator + terms.neg) - std::log(numerator);
  return out;
}

struct PmscResult {
  double value = 0.0;
  int counted = 0;
  int skipped = 0;
  int solitary_counted = 0;
};

// Batch estimator of the matching loss: mean of the per-sample losses over
// the low items that were not skipped.
inline PmscResult pmsc_loss(const DistillBatch& batch, const BatchFeatures& feats,
                            const EfficiencyMatrix& matrix, const DistillConfig& cfg) {
  PmscResult res;
  for (std::size_t i = 0; i < batch.low_items.size(); ++i) {
    const auto l = sample_loss(static_cast<int>(i), batch, feats, matrix, cfg);
    if (l.skipped) {
      res.skipped++;
      continue;
    }
    res.value += l.value;
    res.counted++;
    if (l.solitary) res.solitary_counted++;
  }
  if (res.counted > 0) res.value /= static_cast<double>(res.counted);
  return res;
}

// Gradient of the batch-mean loss with respect to every low-quality part
// feature vector; the high-quality (teacher) side is a constant.
using PartGrads = std::array<std::vector<double>, kNumParts>;

inline PmscResult pmsc_loss_with_grad(const DistillBatch& batch, const BatchFeatures& feats,
                                      const EfficiencyMatrix& matrix, const DistillConfig& cfg,
                                      std::vector<PartGrads>& dlow) {
  cfg.validate();
  const std::size_t n_low = batch.low_items.size();
  dlow.assign(n_low, PartGrads{});
  for (std::size_t i = 0; i < n_low; ++i)
    for (int p = 0; p < kNumParts; ++p)
      dlow[i][static_cast<std::size_t>(p)].assign(
          feats.low[i].vectors[static_cast<std::size_t>(p)].size(), 0.0);

  PmscResult res;
  std::vector<detail::SampleTerms> all_terms(n_low);
  for (std::size_t i = 0; i < n_low; ++i) {
    all_terms[i] = detail::sample_terms(static_cast<int>(i), batch, feats, matrix, cfg);
    if (all_terms[i].skipped) {
      res.skipped++;
      continue;
    }
    const auto& t = all_terms[i];
    const double numerator = t.solitary ? cfg.w * t.pos : t.own + cfg.w * t.pos;
    res.value += std::log(numerator + t.neg) - std::log(numerator);
    res.counted++;
    if (t.solitary) res.solitary_counted++;
  }
  if (res.counted == 0) return res;
  res.value /= static_cast<double>(res.counted);
  const double inv_n = 1.0 / static_cast<double>(res.counted);

  for (std::size_t i = 0; i < n_low; ++i) {
    const auto& t = all_terms[i];
    if (t.skipped) continue;
    const auto& low = batch.low_items[i];
    const double numerator = t.solitary ? cfg.w * t.pos : t.own + cfg.w * t.pos;
    const double denominator = numerator + t.neg;

    // d(loss_i)/d(C_ij) per membership of j
    std::vector<double> dsim(batch.high_items.size(), 0.0);
    const double d_num = 1.0 / denominator - 1.0 / numerator;
    if (!t.solitary) dsim[static_cast<std::size_t>(t.own_index)] += d_num;
    if (!t.sets.positives.empty()) {
      const double d_pos = cfg.w * d_num / static_cast<double>(t.sets.positives.size());
      for (int j : t.sets.positives) dsim[static_cast<std::size_t>(j)] += d_pos;
    }
    const double d_neg = 1.0 / denominator / static_cast<double>(t.sets.negatives.size());
    for (int j : t.sets.negatives) dsim[static_cast<std::size_t>(j)] += d_neg;

    const auto e_row = matrix.row(low.label);
    for (std::size_t j = 0; j < batch.high_items.size(); ++j) {
      if (dsim[j] == 0.0) continue;
      // dC/dphi = C; then through each part cosine.
      const double dphi = dsim[j] * t.sim[j] * inv_n;
      for (int p = 0; p < kNumParts; ++p) {
        const auto& a = feats.low[i].vectors[static_cast<std::size_t>(p)];
        const auto& b = feats.high[j].vectors[static_cast<std::size_t>(p)];
        const double na = detail::vec_norm(a);
        const double nb = detail::vec_norm(b);
        const double denom_c = na * nb + cfg.epsilon_cos;
        const double cosine = detail::vec_dot(a, b) / denom_c;
        const double dcos = dphi * e_row[static_cast<std::size_t>(p)];
        auto& grad = dlow[i][static_cast<std::size_t>(p)];
        const double self_coef = na > 0.0 ? dcos * cosine * nb / denom_c / na : 0.0;
        for (std::size_t c = 0; c < a.size(); ++c)
          grad[c] += dcos * b[c] / denom_c - self_coef * a[c];
      }
    }
  }
  return res;
}

// Total student objective: classification plus alpha-weighted matching.
inline double student_loss(double classification, double pmsc, const DistillConfig& cfg) {
  return classification + cfg.alpha * pmsc;
}

// ---------------------------------------------------------------- sampler

// Prepared model inputs for batch building; the trainer constructs one per
// dataset (after any occlusion protocol) so batches reuse the padded inputs.
struct DistillPool {
  std::vector<DistillBatch::LowItem> lows;
  std::vector<DistillBatch::HighItem> highs;
  std::map<int, std::vector<int>> highs_by_label;
  int num_actions = 0;
};

inline DistillPool make_pool(const Dataset& ds, int frames) {
  DistillPool pool;
  pool.num_actions = ds.num_actions;
  for (const auto& p : ds.paired) {
    auto high = std::make_shared<ModelInput>(pad_or_truncate(p.high, frames));
    auto low = std::make_shared<ModelInput>(pad_or_truncate(p.low, frames));
    pool.highs_by_label[p.high.label].push_back(static_cast<int>(pool.highs.size()));
    pool.highs.push_back({std::move(high), p.high.label, p.high.instance_id});
    pool.lows.push_back({std::move(low), p.low.label, true, p.low.instance_id});
  }
  for (const auto& s : ds.solitary) {
    auto low = std::make_shared<ModelInput>(pad_or_truncate(s, frames));
    pool.lows.push_back({std::move(low), s.label, false, s.instance_id});
  }
  return pool;
}

// Draws a low batch uniformly over paired + solitary items, then assembles
// the high batch: the matches of the sampled paired lows, topped up so every
// sampled low label keeps a positive where one exists and at least two
// distinct labels appear, then filled to the configured size.
inline DistillBatch build_batch(const DistillPool& pool, const DistillConfig& cfg,
                                std::mt19937_64& rng) {
  cfg.validate();
  if (pool.lows.empty() || pool.highs.empty())
    throw SamplerError("build_batch: empty sample pool");
  if (pool.highs_by_label.size() < 2)
    throw SamplerError("build_batch: high-quality pool must span at least two labels");

  DistillBatch batch;

  // Low side: uniform without replacement (with replacement only when the
  // pool is smaller than the batch).
  const std::size_t n_low = pool.lows.size();
  if (n_low >= static_cast<std::size_t>(cfg.batch_low)) {
    std::vector<std::size_t> idx(n_low);
    for (std::size_t i = 0; i < n_low; ++i) idx[i] = i;
    for (int k = 0; k < cfg.batch_low; ++k) {
      const std::size_t pick =
          static_cast<std::size_t>(k) +
          static_cast<std::size_t>(uniform_index(rng, n_low - static_cast<std::size_t>(k)));
      std::swap(idx[static_cast<std::size_t>(k)], idx[pick]);
      batch.low_items.push_back(pool.lows[idx[static_cast<std::size_t>(k)]]);
    }
  } else {
    for (int k = 0; k < cfg.batch_low; ++k)
      batch.low_items.push_back(pool.lows[uniform_index(rng, n_low)]);
  }

  std::set<std::string> used_keys;
  std::set<int> used_labels;
  auto push_high = [&](int pool_index) {
    const auto& item = pool.highs[static_cast<std::size_t>(pool_index)];
    if (!used_keys.insert(item.pair_key).second) return;
    used_labels.insert(item.label);
    batch.high_items.push_back(item);
  };

  // 1) matches of the sampled paired lows
  for (const auto& low : batch.low_items) {
    if (!low.paired) continue;
    const auto it = pool.highs_by_label.find(low.label);
    for (int j : it->second)
      if (pool.highs[static_cast<std::size_t>(j)].pair_key == low.pair_key) {
        push_high(j);
        break;
      }
  }

  // 2) guarantee a positive for every sampled low label that has one
  for (const auto& low : batch.low_items) {
    const auto it = pool.highs_by_label.find(low.label);
    if (it == pool.highs_by_label.end()) continue;
    bool satisfied = false;
    for (const auto& high : batch.high_items)
      if (high.label == low.label && high.pair_key != low.pair_key) {
        satisfied = true;
        break;
      }
    if (satisfied) continue;
    std::vector<int> candidates;
    for (int j : it->second) {
      const auto& cand = pool.highs[static_cast<std::size_t>(j)];
      if (cand.pair_key == low.pair_key || used_keys.count(cand.pair_key)) continue;
      candidates.push_back(j);
    }
    if (!candidates.empty())
      push_high(candidates[uniform_index(rng, candidates.size())]);
  }

  // 3) at least two distinct labels among the highs
  if (used_labels.size() < 2) {
    std::vector<int> candidates;
    for (std::size_t j = 0; j < pool.highs.size(); ++j)
      if (!used_labels.count(pool.highs[j].label) && !used_keys.count(pool.highs[j].pair_key))
        candidates.push_back(static_cast<int>(j));
    if (candidates.empty())
      throw SamplerError("build_batch: cannot reach two distinct high labels");
    push_high(candidates[uniform_index(rng, candidates.size())]);
  }

  // 4) fill to the configured high batch size
  if (static_cast<int>(batch.high_items.size()) < cfg.batch_high) {
    std::vector<int> candidates;
    for (std::size_t j = 0; j < pool.highs.size(); ++j)
      if (!used_keys.count(pool.highs[j].pair_key)) candidates.push_back(static_cast<int>(j));
    shuffle_indices(candidates, rng);
    for (int j : candidates) {
      if (static_cast<int>(batch.high_items.size()) >= cfg.batch_high) break;
      push_high(j);
    }
  }
  return batch;
}

// Builds the pool on the fly; convenience entry point matching the dataset-
// level contract.
inline DistillBatch build_batch(const Dataset& ds, int frames, const DistillConfig& cfg,
                                std::mt19937_64& rng) {
  const auto pool = make_pool(ds, frames);
  return build_batch(pool, cfg, rng);
}

}  // namespace partkd
