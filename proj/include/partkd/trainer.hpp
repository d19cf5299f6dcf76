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

// Two-stage training pipeline: the teacher learns on high-quality data with
// plain cross entropy; the student learns on all low-quality data with
// cross entropy plus the alpha-weighted part matching loss against frozen
// teacher features. Samples are processed in parallel chunks with fixed
// boundaries and gradients reduced in chunk order, so runs with equal seeds
// are bitwise reproducible for a given thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "partkd/backbone.hpp"
#include "partkd/common.hpp"
#include "partkd/dataset_io.hpp"
#include "partkd/distill.hpp"
#include "partkd/heads.hpp"
#include "partkd/part_matrix.hpp"
#include "partkd/sequence.hpp"
#include "partkd/trainer_config.hpp"

namespace partkd {

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_c = 0.0;
  double loss_pmsc = 0.0;
  double train_acc = 0.0;
  int solitary_counted = 0;
  int skipped = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
  std::vector<double> step_loss_trace;  // total loss per optimization step
  long long solitary_branch_total = 0;
  long long skipped_total = 0;
};

// Classification metrics plus enough provenance to recompute them.
struct Metrics {
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<double> per_class;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<std::pair<std::string, int>> predictions;
};

namespace detail {

struct ForwardCtx {
  SampleCache cache;
  JointFeatureMap z;
  GlobalFeature g;
  std::vector<double> logits;
};

inline void check_finite(double loss, const std::string& stage, int epoch) {
  if (!std::isfinite(loss))
    throw Error(stage + ": training diverged (non-finite loss) at epoch " +
                std::to_string(epoch));
}

// One optimization step shared by teacher training and the student's
// classification path: forward all inputs, add the caller's extra feature
// gradient (the matching loss), backpropagate, apply SGD.
struct StepStats {
  double loss_c = 0.0;
  int correct = 0;
};

}  // namespace detail

inline SequenceClassifier make_classifier(std::shared_ptr<const Model> model,
                                          bool masked_pooling = false) {
  return [model, masked_pooling](const SkeletonSequence& seq) {
    const auto input = pad_or_truncate(seq, model->frames);
    const auto z = forward_features(input, *model);
    const auto logits = classify_logits(global_pool(z, masked_pooling), model->params.at("head.w"),
                                        model->params.at("head.b"));
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  };
}

// Returns a copy of the dataset whose low-quality sequences are degraded by
// per-joint occlusion at probability p. Masks are fixed per sample: the seed
// is derived from (seed, instance id) only, so every epoch sees the same
// occlusion unless the caller re-runs this with a different seed.
inline Dataset apply_training_occlusion(Dataset ds, double p, std::uint64_t seed) {
  if (p <= 0.0) return ds;
  auto seq_seed = [seed](const SkeletonSequence& s) {
    return mix_seed(seed, hash_tag(s.instance_id));
  };
  for (auto& pair : ds.paired) pair.low = occlude_joints(pair.low, p, seq_seed(pair.low));
  for (auto& s : ds.solitary) s = occlude_joints(s, p, seq_seed(s));
  return ds;
}

// ---------------------------------------------------------------- teacher

// Cross-entropy pretraining on the high-quality side of the paired set.
inline TrainResult train_teacher(const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  dataset.validate();
  if (dataset.paired.empty()) throw ConfigError("train_teacher: no paired data");

  const std::string schema = dataset.paired[0].high.schema_id;
  Model model = make_model(cfg.backbone, schema, dataset.num_actions, cfg.frames, cfg.seed);

  std::vector<ModelInput> inputs;
  inputs.reserve(dataset.paired.size());
  for (const auto& p : dataset.paired) inputs.push_back(pad_or_truncate(p.high, cfg.frames));

  const int batch = cfg.distill.batch_low;
  const std::size_t n = inputs.size();
  const int steps = static_cast<int>((n + static_cast<std::size_t>(batch) - 1) /
                                     static_cast<std::size_t>(batch));

  SgdOptimizer opt(model.params, cfg.momentum, cfg.weight_decay);
  GradBuffer grads(model.params);
  std::vector<GradBuffer> shard_grads;
  for (int t = 0; t < cfg.threads; ++t) shard_grads.emplace_back(model.params);

  TrainResult result;
  const std::size_t wi = model.params.index_of("head.w");
  const std::size_t bi = model.params.index_of("head.b");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto rng = rng_stream(cfg.seed, "teacher_epoch", epoch);
    shuffle_indices(order, rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    int correct = 0;

    for (int s = 0; s < steps; ++s) {
      const std::size_t lo = static_cast<std::size_t>(s) * static_cast<std::size_t>(batch);
      const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(batch));
      const std::size_t bsz = hi - lo;

      std::vector<detail::ForwardCtx> ctx(bsz);
      parallel_chunks(bsz, cfg.threads, [&](std::size_t b0, std::size_t b1, int) {
        for (std::size_t b = b0; b < b1; ++b) {
          const auto& input = inputs[order[lo + b]];
          ctx[b].z = forward_features(input, model, &ctx[b].cache);
          ctx[b].g = global_pool(ctx[b].z, cfg.masked_pooling);
          ctx[b].logits =
              classify_logits(ctx[b].g, model.params[wi].value, model.params[bi].value);
        }
      });

      std::vector<std::vector<double>> logits(bsz);
      std::vector<int> labels(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        logits[b] = ctx[b].logits;
        labels[b] = inputs[order[lo + b]].label;
        const auto arg = std::max_element(logits[b].begin(), logits[b].end()) - logits[b].begin();
        if (static_cast<int>(arg) == labels[b]) ++correct;
      }
      std::vector<std::vector<double>> dlogits;
      const double loss = cross_entropy_from_logits(logits, labels, &dlogits);
      detail::check_finite(loss, "train_teacher", epoch);

      for (auto& g : shard_grads) g.zero();
      parallel_chunks(bsz, cfg.threads, [&](std::size_t b0, std::size_t b1, int chunk) {
        auto& g = shard_grads[static_cast<std::size_t>(chunk)];
        for (std::size_t b = b0; b < b1; ++b) {
          std::vector<double> dg;
          classify_backward(dlogits[b], ctx[b].g, model.params[wi].value, dg, g.grads[wi],
                            g.grads[bi]);
          Tensor dz;
          global_pool_backward(dg, ctx[b].z, dz, cfg.masked_pooling);
          backbone_backward(dz, ctx[b].cache, model, g);
        }
      });
      grads.zero();
      for (const auto& g : shard_grads) grads.add(g);
      opt.step(model.params, grads, lr);

      log.loss_c += loss;
      result.step_loss_trace.push_back(loss);
    }
    log.loss_c /= steps;
    log.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    result.history.push_back(log);
  }
  result.checkpoint = to_checkpoint(model);
  return result;
}

// ---------------------------------------------------------------- student

// Student training over all low-quality data. With alpha > 0 (and no_kd
// false) every step adds the part matching loss against the frozen teacher's
// part features; no_kd skips the teacher entirely and realizes the plain
// low-quality baseline.
inline TrainResult train_student(const Dataset& dataset, const Checkpoint& teacher,
                                 const EfficiencyMatrix& matrix, const TrainConfig& cfg,
                                 bool no_kd = false) {
  cfg.validate();
  dataset.validate();
  if (dataset.paired.empty()) throw ConfigError("train_student: no paired data");
  const bool kd = !no_kd;

  const std::string student_schema = dataset.paired[0].low.schema_id;
  for (const auto& s : dataset.solitary)
    if (s.schema_id != student_schema)
      throw ConfigError("train_student: mixed low-quality schemas");
  Model model =
      make_model(cfg.backbone, student_schema, dataset.num_actions, cfg.frames, cfg.seed);
  const PartMap student_pm = build_part_map(student_schema);

  // frozen teacher + its part features for the whole high-quality pool
  std::shared_ptr<Model> teacher_model;
  PartMap teacher_pm;
  if (kd) {
    teacher_model = std::make_shared<Model>(to_model(teacher));
    if (teacher_model->cfg.feature_channels() != cfg.backbone.feature_channels())
      throw ConfigError("train_student: teacher and student feature widths differ");
    if (teacher_model->num_actions != dataset.num_actions)
      throw ConfigError("train_student: teacher action count differs from the dataset");
    if (matrix.num_actions() != dataset.num_actions)
      throw ConfigError("train_student: efficiency matrix rows != dataset actions");
    teacher_pm = build_part_map(teacher_model->graph.schema_id);
  }

  const Dataset occluded =
      apply_training_occlusion(dataset, cfg.occlusion_p, mix_seed(cfg.seed, hash_tag("train_occlusion")));
  DistillPool pool = make_pool(occluded, cfg.frames);

  std::map<std::string, PartFeatureSet> teacher_features;
  if (kd) {
    std::vector<PartFeatureSet> feats(pool.highs.size());
    parallel_chunks(pool.highs.size(), cfg.threads, [&](std::size_t b0, std::size_t b1, int) {
      for (std::size_t j = b0; j < b1; ++j) {
        const auto z = forward_features(*pool.highs[j].input, *teacher_model);
        feats[j] = pool_parts(z, teacher_pm, cfg.masked_pooling);
      }
    });
    for (std::size_t j = 0; j < pool.highs.size(); ++j)
      teacher_features.emplace(pool.highs[j].pair_key, std::move(feats[j]));
  }

  const int batch = cfg.distill.batch_low;
  const std::size_t n = pool.lows.size();
  const int steps = static_cast<int>((n + static_cast<std::size_t>(batch) - 1) /
                                     static_cast<std::size_t>(batch));

  SgdOptimizer opt(model.params, cfg.momentum, cfg.weight_decay);
  GradBuffer grads(model.params);
  std::vector<GradBuffer> shard_grads;
  for (int t = 0; t < cfg.threads; ++t) shard_grads.emplace_back(model.params);
  const std::size_t wi = model.params.index_of("head.w");
  const std::size_t bi = model.params.index_of("head.b");

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    int correct = 0, seen = 0;

    DistillPool* active_pool = &pool;
    DistillPool reoccluded;
    if (cfg.reocclude_per_epoch && cfg.occlusion_p > 0.0) {
      const Dataset redo = apply_training_occlusion(
          dataset, cfg.occlusion_p,
          mix_seed(cfg.seed, mix_seed(hash_tag("train_occlusion"), epoch)));
      reoccluded = make_pool(redo, cfg.frames);
      active_pool = &reoccluded;
    }

    for (int s = 0; s < steps; ++s) {
      auto rng = rng_stream(cfg.seed, "student_batch", epoch, s);
      const DistillBatch dbatch = build_batch(*active_pool, cfg.distill, rng);
      const std::size_t bsz = dbatch.low_items.size();

      std::vector<detail::ForwardCtx> ctx(bsz);
      BatchFeatures feats;
      feats.low.resize(bsz);
      parallel_chunks(bsz, cfg.threads, [&](std::size_t b0, std::size_t b1, int) {
        for (std::size_t b = b0; b < b1; ++b) {
          ctx[b].z = forward_features(*dbatch.low_items[b].input, model, &ctx[b].cache);
          feats.low[b] = pool_parts(ctx[b].z, student_pm, cfg.masked_pooling);
          ctx[b].g = global_pool(ctx[b].z, cfg.masked_pooling);
          ctx[b].logits =
              classify_logits(ctx[b].g, model.params[wi].value, model.params[bi].value);
        }
      });

      std::vector<std::vector<double>> logits(bsz);
      std::vector<int> labels(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        logits[b] = ctx[b].logits;
        labels[b] = dbatch.low_items[b].label;
        const auto arg = std::max_element(logits[b].begin(), logits[b].end()) - logits[b].begin();
        if (static_cast<int>(arg) == labels[b]) ++correct;
        ++seen;
      }
      std::vector<std::vector<double>> dlogits;
      const double loss_c = cross_entropy_from_logits(logits, labels, &dlogits);

      PmscResult pmsc;
      std::vector<PartGrads> dlow;
      if (kd) {
        for (const auto& h : dbatch.high_items)
          feats.high.push_back(teacher_features.at(h.pair_key));
        pmsc = pmsc_loss_with_grad(dbatch, feats, matrix, cfg.distill, dlow);
        feats.high.clear();
        log.solitary_counted += pmsc.solitary_counted;
        log.skipped += pmsc.skipped;
      }
      const double total = student_loss(loss_c, pmsc.value, cfg.distill);
      detail::check_finite(total, "train_student", epoch);

      for (auto& g : shard_grads) g.zero();
      parallel_chunks(bsz, cfg.threads, [&](std::size_t b0, std::size_t b1, int chunk) {
        auto& g = shard_grads[static_cast<std::size_t>(chunk)];
        for (std::size_t b = b0; b < b1; ++b) {
          std::vector<double> dg;
          classify_backward(dlogits[b], ctx[b].g, model.params[wi].value, dg, g.grads[wi],
                            g.grads[bi]);
          Tensor dz;
          global_pool_backward(dg, ctx[b].z, dz, cfg.masked_pooling);
          if (kd && cfg.distill.alpha != 0.0) {
            PartGrads scaled = dlow[b];
            for (auto& vec : scaled)
              for (auto& v : vec) v *= cfg.distill.alpha;
            pool_parts_backward(scaled, student_pm, ctx[b].z, dz, cfg.masked_pooling);
          }
          backbone_backward(dz, ctx[b].cache, model, g);
        }
      });
      grads.zero();
      for (const auto& g : shard_grads) grads.add(g);
      opt.step(model.params, grads, lr);

      log.loss_c += loss_c;
      log.loss_pmsc += pmsc.value;
      result.step_loss_trace.push_back(loss_c);
    }
    log.loss_c /= steps;
    log.loss_pmsc /= steps;
    log.train_acc = seen > 0 ? static_cast<double>(correct) / seen : 0.0;
    result.solitary_branch_total += log.solitary_counted;
    result.skipped_total += log.skipped;
    result.history.push_back(log);
  }
  result.checkpoint = to_checkpoint(model);
  return result;
}

// ---------------------------------------------------------------- evaluate

inline constexpr std::uint64_t kEvalOcclusionSeed = 0x5eedf00dULL;

// Applies the degradation protocol (per-joint occlusion with a fixed
// evaluation seed, independent of training seeds) and scores the model.
inline Metrics evaluate(const Model& model, const std::vector<SkeletonSequence>& test_set,
                        double occlusion_p, std::uint64_t eval_seed = kEvalOcclusionSeed,
                        int threads = default_thread_count(), bool masked_pooling = false) {
  if (test_set.empty()) throw ConfigError("evaluate: empty test set");
  const int actions = model.num_actions;
  Metrics m;
  m.per_class.assign(static_cast<std::size_t>(actions), 0.0);
  m.confusion.assign(static_cast<std::size_t>(actions),
                     std::vector<std::int64_t>(static_cast<std::size_t>(actions), 0));

  const int top_k = std::min(5, actions);
  std::vector<int> top1_hits(test_set.size(), 0), topk_hits(test_set.size(), 0);
  std::vector<int> predicted(test_set.size(), -1);

  parallel_chunks(test_set.size(), threads, [&](std::size_t b0, std::size_t b1, int) {
    for (std::size_t i = b0; i < b1; ++i) {
      SkeletonSequence seq = test_set[i];
      if (occlusion_p > 0.0)
        seq = occlude_joints(seq, occlusion_p, mix_seed(eval_seed, hash_tag(seq.instance_id)));
      const auto input = pad_or_truncate(seq, model.frames);
      const auto z = forward_features(input, model);
      const auto logits = classify_logits(global_pool(z, masked_pooling),
                                          model.params.at("head.w"), model.params.at("head.b"));
      std::vector<int> order(logits.size());
      for (std::size_t a = 0; a < order.size(); ++a) order[a] = static_cast<int>(a);
      std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                        [&](int a, int b) { return logits[static_cast<std::size_t>(a)] >
                                                   logits[static_cast<std::size_t>(b)]; });
      predicted[i] = order[0];
      if (order[0] == seq.label) top1_hits[i] = 1;
      for (int k = 0; k < top_k; ++k)
        if (order[static_cast<std::size_t>(k)] == seq.label) topk_hits[i] = 1;
    }
  });

  std::vector<std::int64_t> class_total(static_cast<std::size_t>(actions), 0);
  std::int64_t top1 = 0, topk = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const int y = test_set[i].label;
    if (y < 0 || y >= actions) throw ValidationError("evaluate: test label out of range");
    m.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(predicted[i])]++;
    class_total[static_cast<std::size_t>(y)]++;
    top1 += top1_hits[i];
    topk += topk_hits[i];
    m.predictions.emplace_back(test_set[i].instance_id, predicted[i]);
  }
  m.top1 = static_cast<double>(top1) / static_cast<double>(test_set.size());
  m.top5 = static_cast<double>(topk) / static_cast<double>(test_set.size());
  for (int c = 0; c < actions; ++c) {
    const auto total = class_total[static_cast<std::size_t>(c)];
    m.per_class[static_cast<std::size_t>(c)] =
        total > 0 ? static_cast<double>(m.confusion[static_cast<std::size_t>(c)]
                                                   [static_cast<std::size_t>(c)]) /
                        static_cast<double>(total)
                  : 0.0;
  }
  return m;
}

// Builds the efficiency matrix from a pretrained teacher and the paired
// high-quality training set. The teacher runs in evaluation mode; the
// matrix is a fixed measurement used unchanged for the whole student run.
// holdout_fraction > 0 measures on a held-out subset instead of the full
// set (ablation knob).
inline EfficiencyMatrix build_efficiency_matrix(const Checkpoint& teacher, const Dataset& dataset,
                                                double holdout_fraction = 0.0,
                                                int threads = default_thread_count(),
                                                std::uint64_t holdout_seed = 17) {
  auto model = std::make_shared<Model>(to_model(teacher));
  const PartMap pm = build_part_map(model->graph.schema_id);
  std::vector<SkeletonSequence> hq;
  hq.reserve(dataset.paired.size());
  for (const auto& p : dataset.paired) hq.push_back(p.high);
  if (holdout_fraction > 0.0) {
    if (holdout_fraction >= 1.0)
      throw ConfigError("build_efficiency_matrix: holdout fraction must be < 1");
    std::vector<std::size_t> order(hq.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto rng = rng_stream(holdout_seed, "matrix_holdout");
    shuffle_indices(order, rng);
    const std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(holdout_fraction * static_cast<double>(hq.size())));
    std::vector<SkeletonSequence> subset;
    for (std::size_t i = 0; i < keep; ++i) subset.push_back(hq[order[i]]);
    hq = std::move(subset);
  }
  auto m = raw_efficiency(make_classifier(model), hq, pm, dataset.num_actions, threads);
  return normalize_matrix(std::move(m));
}

}  // namespace partkd
