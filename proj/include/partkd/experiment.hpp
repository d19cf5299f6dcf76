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

// Experiment grid: synth -> train-teacher -> build-matrix -> train-student
// (with and without distillation) -> evaluate, across occlusion levels and
// optional pairing fractions, repeated over seeds. Writes an aligned results
// table, the efficiency-matrix heatmap, per-run logs, and a config echo.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "partkd/synth.hpp"
#include "partkd/trainer.hpp"

namespace partkd {

struct ExperimentManifest {
  std::string out_dir = "experiment_out";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  SynthConfig synth;                              // per-seed: synth.seed = seed
  TrainConfig train = TrainConfig::fast_profile();
  std::vector<double> occlusion_levels = {0.0, 0.3, 0.6};
  std::vector<double> pairing_fractions = {};     // e.g. {0.7, 0.8}
  double pairing_occlusion_p = 0.3;
  int test_samples_per_action = 25;
  std::uint64_t test_seed_offset = 9991;

  void validate() const {
    if (seeds.empty()) throw ConfigError("experiment: at least one seed required");
    if (test_samples_per_action < 1)
      throw ConfigError("experiment: test_samples_per_action must be >= 1");
    for (double p : occlusion_levels)
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("experiment: occlusion level out of range");
    for (double f : pairing_fractions)
      if (!(f > 0.0 && f < 1.0))
        throw ConfigError("experiment: pairing fractions must lie in (0,1)");
    synth.validate();
    train.validate();
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& cfg) {
  j = {{"num_actions", cfg.num_actions},
       {"samples_per_action", cfg.samples_per_action},
       {"frame_length", cfg.frame_length},
       {"teacher_schema", cfg.teacher_schema},
       {"student_schema", cfg.student_schema},
       {"lowq_noise_std", cfg.lowq_noise_std},
       {"lowq_joint_drop", cfg.lowq_joint_drop},
       {"solitary_fraction", cfg.solitary_fraction},
       {"seed", cfg.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& cfg) {
  cfg.num_actions = j.value("num_actions", cfg.num_actions);
  cfg.samples_per_action = j.value("samples_per_action", cfg.samples_per_action);
  cfg.frame_length = j.value("frame_length", cfg.frame_length);
  cfg.teacher_schema = j.value("teacher_schema", cfg.teacher_schema);
  cfg.student_schema = j.value("student_schema", cfg.student_schema);
  cfg.lowq_noise_std = j.value("lowq_noise_std", cfg.lowq_noise_std);
  cfg.lowq_joint_drop = j.value("lowq_joint_drop", cfg.lowq_joint_drop);
  cfg.solitary_fraction = j.value("solitary_fraction", cfg.solitary_fraction);
  cfg.seed = j.value("seed", cfg.seed);
}

inline void to_json(nlohmann::json& j, const ExperimentManifest& m) {
  j = {{"out_dir", m.out_dir},
       {"seeds", m.seeds},
       {"synth", m.synth},
       {"train", m.train},
       {"occlusion_levels", m.occlusion_levels},
       {"pairing_fractions", m.pairing_fractions},
       {"pairing_occlusion_p", m.pairing_occlusion_p},
       {"test_samples_per_action", m.test_samples_per_action},
       {"test_seed_offset", m.test_seed_offset}};
}

inline void from_json(const nlohmann::json& j, ExperimentManifest& m) {
  m.out_dir = j.value("out_dir", m.out_dir);
  m.seeds = j.value("seeds", m.seeds);
  if (j.contains("synth")) j.at("synth").get_to(m.synth);
  if (j.contains("train")) j.at("train").get_to(m.train);
  m.occlusion_levels = j.value("occlusion_levels", m.occlusion_levels);
  m.pairing_fractions = j.value("pairing_fractions", m.pairing_fractions);
  m.pairing_occlusion_p = j.value("pairing_occlusion_p", m.pairing_occlusion_p);
  m.test_samples_per_action = j.value("test_samples_per_action", m.test_samples_per_action);
  m.test_seed_offset = j.value("test_seed_offset", m.test_seed_offset);
}

inline ExperimentManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
    ExperimentManifest m = j.get<ExperimentManifest>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("experiment manifest: ") + e.what());
  }
}

struct RunRecord {
  std::string method;    // Teacher / Student (w/o KD) / Student (w/ KD)
  std::string skeleton;  // schema profile the model consumes
  double occlusion_p = 0.0;
  double pairing_fraction = 1.0;  // share of instances with high-quality data
  double amount = 1.0;            // share of the low-quality data used
  std::uint64_t seed = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  long long solitary_branch = 0;
};

struct ExperimentReport {
  std::vector<RunRecord> records;

  double mean_top1(const std::string& method, double occlusion_p, double pairing_fraction = 1.0,
                   double amount = 1.0) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : records)
      if (r.method == method && r.occlusion_p == occlusion_p &&
          r.pairing_fraction == pairing_fraction && r.amount == amount) {
        sum += r.top1;
        ++n;
      }
    if (n == 0) throw ConfigError("report: no records for requested aggregate");
    return sum / n;
  }
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage '" + stage + "' failed: " + e.what());
  }
}

inline void write_history(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  for (const auto& log : result.history) {
    out << "epoch " << std::setw(3) << log.epoch << "  lr " << std::setw(8) << log.lr
        << "  loss_c " << std::fixed << std::setprecision(6) << log.loss_c << "  loss_pmsc "
        << log.loss_pmsc << "  train_acc " << std::setprecision(4) << log.train_acc
        << "  solitary " << log.solitary_counted << "  skipped " << log.skipped << '\n';
    out.unsetf(std::ios::fixed);
  }
}

inline std::string format_row(const RunRecord& r) {
  std::ostringstream os;
  os << std::left << std::setw(18) << r.method << std::setw(20) << r.skeleton << std::right
     << std::setw(8) << std::fixed << std::setprecision(2) << r.occlusion_p << std::setw(9)
     << std::setprecision(0) << r.pairing_fraction * 100 << '%' << std::setw(8)
     << r.amount * 100 << '%' << std::setw(7) << ("s" + std::to_string(r.seed)) << std::setw(9)
     << std::setprecision(2) << r.top1 * 100 << std::setw(9) << r.top5 * 100;
  return os.str();
}

inline std::string format_mean_row(const std::string& method, const std::string& skeleton,
                                   double p, double fraction, double amount, double top1,
                                   double top5) {
  std::ostringstream os;
  os << std::left << std::setw(18) << method << std::setw(20) << skeleton << std::right
     << std::setw(8) << std::fixed << std::setprecision(2) << p << std::setw(9)
     << std::setprecision(0) << fraction * 100 << '%' << std::setw(8) << amount * 100 << '%'
     << std::setw(7) << "mean" << std::setw(9) << std::setprecision(2) << top1 * 100
     << std::setw(9) << top5 * 100;
  return os.str();
}

}  // namespace detail

// Executes the full grid and writes report.txt, the matrix heatmap, teacher
// checkpoints, and per-run training logs into manifest.out_dir.
inline ExperimentReport run_experiment(const ExperimentManifest& manifest) {
  namespace fs = std::filesystem;
  manifest.validate();
  fs::create_directories(fs::path(manifest.out_dir) / "logs");

  {
    std::ofstream cfg_echo(fs::path(manifest.out_dir) / "config.json");
    if (!cfg_echo) throw IOError("experiment: cannot write into " + manifest.out_dir);
    cfg_echo << nlohmann::json(manifest).dump(2) << '\n';
  }

  ExperimentReport report;
  const std::string teacher_profile = manifest.synth.teacher_schema + " (high)";
  const std::string student_profile = manifest.synth.student_schema + " (low)";

  for (const std::uint64_t seed : manifest.seeds) {
    const std::string tag = "seed" + std::to_string(seed);

    SynthConfig synth_cfg = manifest.synth;
    synth_cfg.seed = seed;
    const Dataset train_ds =
        detail::run_stage("synth", [&] { return synth_generate(synth_cfg); });

    SynthConfig test_cfg = manifest.synth;
    test_cfg.seed = seed + manifest.test_seed_offset;
    test_cfg.samples_per_action = manifest.test_samples_per_action;
    test_cfg.solitary_fraction = 0.0;
    const Dataset test_ds =
        detail::run_stage("synth-test", [&] { return synth_generate(test_cfg); });
    std::vector<SkeletonSequence> test_low, test_high;
    for (const auto& p : test_ds.paired) {
      test_low.push_back(p.low);
      test_high.push_back(p.high);
    }

    TrainConfig tcfg = manifest.train;
    tcfg.seed = seed;
    const TrainResult teacher =
        detail::run_stage("train-teacher", [&] { return train_teacher(train_ds, tcfg); });
    detail::write_history(
        (fs::path(manifest.out_dir) / "logs" / (tag + "_teacher.log")).string(), teacher);
    save_checkpoint(teacher.checkpoint,
                    (fs::path(manifest.out_dir) / (tag + "_teacher.ckpt")).string());

    const EfficiencyMatrix matrix = detail::run_stage("build-matrix", [&] {
      return build_efficiency_matrix(teacher.checkpoint, train_ds, 0.0, tcfg.threads);
    });
    if (seed == manifest.seeds.front()) {
      std::vector<std::string> names;
      for (int c = 0; c < train_ds.num_actions; ++c) names.push_back("action-" + std::to_string(c));
      export_heatmap(matrix, names,
                     (fs::path(manifest.out_dir) / "efficiency_matrix").string());
    }

    const Model teacher_model = to_model(teacher.checkpoint);

    for (const double p : manifest.occlusion_levels) {
      const auto m_teacher = detail::run_stage(
          "eval-teacher", [&] { return evaluate(teacher_model, test_high, p); });
      report.records.push_back({"Teacher", teacher_profile, p, 1.0, 1.0, seed, m_teacher.top1,
                                m_teacher.top5, 0});

      TrainConfig scfg = tcfg;
      scfg.occlusion_p = p;
      const std::string run_tag = tag + "_p" + std::to_string(static_cast<int>(p * 100));

      const TrainResult no_kd = detail::run_stage("train-student-no-kd", [&] {
        return train_student(train_ds, teacher.checkpoint, matrix, scfg, true);
      });
      detail::write_history(
          (fs::path(manifest.out_dir) / "logs" / (run_tag + "_student_nokd.log")).string(),
          no_kd);
      const auto m_nokd = detail::run_stage("eval-student-no-kd", [&] {
        return evaluate(to_model(no_kd.checkpoint), test_low, p);
      });
      report.records.push_back({"Student (w/o KD)", student_profile, p, 1.0, 1.0, seed,
                                m_nokd.top1, m_nokd.top5, 0});

      const TrainResult kd = detail::run_stage("train-student-kd", [&] {
        return train_student(train_ds, teacher.checkpoint, matrix, scfg, false);
      });
      detail::write_history(
          (fs::path(manifest.out_dir) / "logs" / (run_tag + "_student_kd.log")).string(), kd);
      const auto m_kd = detail::run_stage(
          "eval-student-kd", [&] { return evaluate(to_model(kd.checkpoint), test_low, p); });
      report.records.push_back({"Student (w/ KD)", student_profile, p, 1.0, 1.0, seed, m_kd.top1,
                                m_kd.top5, kd.solitary_branch_total});
    }

    // Partial-pairing sweep: only a fraction of instances has high-quality
    // data; compare students that use just the paired low-quality share
    // against one that adds the solitary remainder.
    for (const double fraction : manifest.pairing_fractions) {
      SynthConfig frac_cfg = synth_cfg;
      frac_cfg.solitary_fraction = 1.0 - fraction;
      const Dataset frac_ds =
          detail::run_stage("synth-fraction", [&] { return synth_generate(frac_cfg); });
      Dataset paired_only;
      paired_only.num_actions = frac_ds.num_actions;
      paired_only.paired = frac_ds.paired;

      TrainConfig fcfg = tcfg;
      fcfg.occlusion_p = manifest.pairing_occlusion_p;
      const double p = fcfg.occlusion_p;
      const std::string run_tag =
          tag + "_frac" + std::to_string(static_cast<int>(fraction * 100));

      const TrainResult teacher_f = detail::run_stage(
          "train-teacher-fraction", [&] { return train_teacher(paired_only, fcfg); });
      const EfficiencyMatrix matrix_f = detail::run_stage("build-matrix-fraction", [&] {
        return build_efficiency_matrix(teacher_f.checkpoint, paired_only, 0.0, fcfg.threads);
      });
      const auto m_teacher_f = evaluate(to_model(teacher_f.checkpoint), test_high, p);
      report.records.push_back({"Teacher", teacher_profile, p, fraction, fraction, seed,
                                m_teacher_f.top1, m_teacher_f.top5, 0});

      const TrainResult nokd_f = detail::run_stage("train-student-no-kd-fraction", [&] {
        return train_student(paired_only, teacher_f.checkpoint, matrix_f, fcfg, true);
      });
      const auto m_nokd_f = evaluate(to_model(nokd_f.checkpoint), test_low, p);
      report.records.push_back({"Student (w/o KD)", student_profile, p, fraction, fraction, seed,
                                m_nokd_f.top1, m_nokd_f.top5, 0});

      const TrainResult kd_partial = detail::run_stage("train-student-kd-fraction", [&] {
        return train_student(paired_only, teacher_f.checkpoint, matrix_f, fcfg, false);
      });
      const auto m_kd_partial = evaluate(to_model(kd_partial.checkpoint), test_low, p);
      report.records.push_back({"Student (w/ KD)", student_profile, p, fraction, fraction, seed,
                                m_kd_partial.top1, m_kd_partial.top5,
                                kd_partial.solitary_branch_total});

      const TrainResult kd_full = detail::run_stage("train-student-kd-solitary", [&] {
        return train_student(frac_ds, teacher_f.checkpoint, matrix_f, fcfg, false);
      });
      detail::write_history(
          (fs::path(manifest.out_dir) / "logs" / (run_tag + "_student_kd_full.log")).string(),
          kd_full);
      const auto m_kd_full = evaluate(to_model(kd_full.checkpoint), test_low, p);
      report.records.push_back({"Student (w/ KD)", student_profile, p, fraction, 1.0, seed,
                                m_kd_full.top1, m_kd_full.top5, kd_full.solitary_branch_total});
    }
  }

  // ---------------------------------------------------------------- report
  std::ofstream out(fs::path(manifest.out_dir) / "report.txt");
  if (!out) throw IOError("experiment: cannot write report");
  out << std::left << std::setw(18) << "method" << std::setw(20) << "skeleton" << std::right
      << std::setw(8) << "occl-p" << std::setw(10) << "paired" << std::setw(9) << "amount"
      << std::setw(7) << "seed" << std::setw(9) << "top1" << std::setw(9) << "top5" << '\n';
  out << std::string(90, '-') << '\n';

  struct Key {
    std::string method;
    double p, fraction, amount;
    bool operator<(const Key& o) const {
      return std::tie(p, fraction, amount, method) < std::tie(o.p, o.fraction, o.amount, o.method);
    }
  };
  std::map<Key, std::vector<const RunRecord*>> groups;
  for (const auto& r : report.records)
    groups[{r.method, r.occlusion_p, r.pairing_fraction, r.amount}].push_back(&r);

  double current_p = -1.0;
  for (const auto& [key, rows] : groups) {
    if (key.p != current_p) {
      if (current_p >= 0.0) out << '\n';
      current_p = key.p;
    }
    double top1 = 0.0, top5 = 0.0;
    for (const auto* r : rows) {
      out << detail::format_row(*r) << '\n';
      top1 += r->top1;
      top5 += r->top5;
    }
    out << detail::format_mean_row(key.method, rows.front()->skeleton, key.p, key.fraction,
                                   key.amount, top1 / rows.size(), top5 / rows.size())
        << '\n';
  }
  return report;
}

}  // namespace partkd
