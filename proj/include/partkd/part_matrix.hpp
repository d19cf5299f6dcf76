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

// Action-specific high-efficiency part matrix: for every action class and
// body part, the fraction of high-quality training instances the teacher
// misclassifies once that part is occluded, softmax-normalized per row.
// A large entry marks a part the teacher depends on for that action.

#include <cmath>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/graph.hpp"
#include "partkd/heatmap.hpp"
#include "partkd/sequence.hpp"
#include "partkd/tensor.hpp"

namespace partkd {

struct EfficiencyMatrix {
  Tensor raw;            // (C_actions, 5), misclassification ratios in [0,1]
  Tensor normalized;     // (C_actions, 5), per-row softmax of raw
  Tensor evaluated;      // provenance: instances scored per (action, part)
  Tensor misclassified;  // provenance: instances missed per (action, part)

  int num_actions() const { return static_cast<int>(raw.dim(0)); }

  std::vector<double> row(int action) const {
    std::vector<double> e(kNumParts);
    for (int p = 0; p < kNumParts; ++p) e[static_cast<std::size_t>(p)] = normalized.at2(action, p);
    return e;
  }
};

// Per-sequence classifier used to probe the teacher; must be callable from
// several threads at once.
using SequenceClassifier = std::function<int(const SkeletonSequence&)>;

// Scores every high-quality sequence under each single-part occlusion and
// tallies the misclassification ratio per (action, part). Every action must
// be represented. Per-sequence inference runs in parallel; the counters are
// merged at one aggregation point.
inline EfficiencyMatrix raw_efficiency(const SequenceClassifier& teacher,
                                       const std::vector<SkeletonSequence>& hq_set,
                                       const PartMap& pm, int num_actions,
                                       int threads = default_thread_count()) {
  if (num_actions < 1) throw ConfigError("raw_efficiency: num_actions must be positive");
  std::vector<int> per_class(static_cast<std::size_t>(num_actions), 0);
  for (const auto& seq : hq_set) {
    if (seq.label < 0 || seq.label >= num_actions)
      throw ValidationError("raw_efficiency: label out of range");
    per_class[static_cast<std::size_t>(seq.label)]++;
  }
  for (int c = 0; c < num_actions; ++c)
    if (per_class[static_cast<std::size_t>(c)] == 0)
      throw MissingClass("raw_efficiency: action " + std::to_string(c) +
                         " has no high-quality instances");

  EfficiencyMatrix m;
  m.raw.resize({num_actions, kNumParts});
  m.normalized.resize({num_actions, kNumParts});
  m.evaluated.resize({num_actions, kNumParts});
  m.misclassified.resize({num_actions, kNumParts});

  struct Cell {
    std::int64_t seen = 0, missed = 0;
  };
  std::vector<std::vector<Cell>> shard(
      static_cast<std::size_t>(threads < 1 ? 1 : threads),
      std::vector<Cell>(static_cast<std::size_t>(num_actions) * kNumParts));

  parallel_chunks(hq_set.size(), threads, [&](std::size_t begin, std::size_t end, int chunk) {
    auto& counts = shard[static_cast<std::size_t>(chunk)];
    for (std::size_t i = begin; i < end; ++i) {
      const auto& seq = hq_set[i];
      for (int p = 0; p < kNumParts; ++p) {
        const int predicted = teacher(occlude_part(seq, pm, p));
        auto& cell = counts[static_cast<std::size_t>(seq.label) * kNumParts +
                            static_cast<std::size_t>(p)];
        cell.seen++;
        if (predicted != seq.label) cell.missed++;
      }
    }
  });

  for (int c = 0; c < num_actions; ++c) {
    for (int p = 0; p < kNumParts; ++p) {
      std::int64_t seen = 0, missed = 0;
      for (const auto& counts : shard) {
        seen += counts[static_cast<std::size_t>(c) * kNumParts + static_cast<std::size_t>(p)].seen;
        missed +=
            counts[static_cast<std::size_t>(c) * kNumParts + static_cast<std::size_t>(p)].missed;
      }
      m.evaluated.at2(c, p) = static_cast<double>(seen);
      m.misclassified.at2(c, p) = static_cast<double>(missed);
      m.raw.at2(c, p) = static_cast<double>(missed) / static_cast<double>(seen);
    }
  }
  return m;
}

inline Tensor softmax_rows(const Tensor& raw) {
  Tensor out(raw.shape());
  const std::int64_t rows = raw.dim(0), cols = raw.dim(1);
  for (std::int64_t r = 0; r < rows; ++r) {
    double mx = raw.at2(r, 0);
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, raw.at2(r, c));
    double z = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) z += std::exp(raw.at2(r, c) - mx);
    for (std::int64_t c = 0; c < cols; ++c) out.at2(r, c) = std::exp(raw.at2(r, c) - mx) / z;
  }
  return out;
}

// Per-action softmax over the five raw ratios.
inline EfficiencyMatrix normalize_matrix(EfficiencyMatrix m) {
  if (!m.raw.all_finite()) throw ConfigError("normalize_matrix: non-finite raw entries");
  m.normalized = softmax_rows(m.raw);
  return m;
}

// ---------------------------------------------------------------- dump / load

namespace detail {

inline nlohmann::json tensor_rows(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::int64_t r = 0; r < t.dim(0); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::int64_t c = 0; c < t.dim(1); ++c) row.push_back(t.at2(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor tensor_from_rows(const nlohmann::json& rows) {
  const std::int64_t r_dim = static_cast<std::int64_t>(rows.size());
  const std::int64_t c_dim = static_cast<std::int64_t>(rows.at(0).size());
  Tensor t({r_dim, c_dim});
  for (std::int64_t r = 0; r < r_dim; ++r)
    for (std::int64_t c = 0; c < c_dim; ++c)
      t.at2(r, c) = rows.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c))
                        .get<double>();
  return t;
}

}  // namespace detail

inline void save_matrix(const EfficiencyMatrix& m, const std::vector<std::string>& action_names,
                        const std::string& path) {
  nlohmann::json doc;
  doc["action_names"] = action_names;
  doc["part_names"] = kPartNames;
  doc["raw"] = detail::tensor_rows(m.raw);
  doc["normalized"] = detail::tensor_rows(m.normalized);
  doc["evaluated"] = detail::tensor_rows(m.evaluated);
  doc["misclassified"] = detail::tensor_rows(m.misclassified);
  std::ofstream out(path);
  if (!out) throw IOError("cannot write matrix dump: " + path);
  out << doc.dump(1) << '\n';
}

inline EfficiencyMatrix load_matrix(const std::string& path,
                                    std::vector<std::string>* action_names = nullptr) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open matrix dump: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
    EfficiencyMatrix m;
    m.raw = detail::tensor_from_rows(doc.at("raw"));
    m.normalized = detail::tensor_from_rows(doc.at("normalized"));
    m.evaluated = detail::tensor_from_rows(doc.at("evaluated"));
    m.misclassified = detail::tensor_from_rows(doc.at("misclassified"));
    if (action_names) *action_names = doc.at("action_names").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("matrix dump: ") + e.what());
  }
}

// Writes <out_prefix>.bmp (rows = actions, columns = parts, dark = large)
// and <out_prefix>.json with the full-precision matrices and provenance.
inline void export_heatmap(const EfficiencyMatrix& m,
                           const std::vector<std::string>& action_names,
                           const std::string& out_prefix) {
  if (static_cast<int>(action_names.size()) != m.num_actions())
    throw ConfigError("export_heatmap: one name per action row required");

  save_matrix(m, action_names, out_prefix + ".json");

  const auto layout = heatmap_layout(action_names);
  const int rows = m.num_actions();
  Image img(layout.width(kNumParts), layout.height(rows), {255, 255, 255});

  double lo = m.normalized.at2(0, 0), hi = lo;
  for (std::int64_t i = 0; i < m.normalized.size(); ++i) {
    lo = std::min(lo, m.normalized[i]);
    hi = std::max(hi, m.normalized[i]);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  static const char* kColumnLabels[kNumParts] = {"HEAD", "L-ARM", "R-ARM", "L-LEG", "R-LEG"};
  for (int p = 0; p < kNumParts; ++p)
    draw_text(img, layout.left_gutter + layout.gap + p * (layout.cell_w + layout.gap) + 2, 3,
              kColumnLabels[p], {60, 60, 60});
  for (int r = 0; r < rows; ++r) {
    const int y = layout.top_gutter + layout.gap + r * (layout.cell_h + layout.gap);
    draw_text(img, 4, y + (layout.cell_h - 7) / 2, action_names[static_cast<std::size_t>(r)],
              {60, 60, 60});
    for (int p = 0; p < kNumParts; ++p) {
      const int x = layout.left_gutter + layout.gap + p * (layout.cell_w + layout.gap);
      const double t = (m.normalized.at2(r, p) - lo) / span;
      img.fill_rect(x, y, layout.cell_w, layout.cell_h, heat_color(t));
    }
  }
  img.save_bmp(out_prefix + ".bmp");
}

}  // namespace partkd
