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

// Command-line front end.
//
//   partkd synth          --config synth.json --out data/
//   partkd train-teacher  --data data/ --out run/ [--config train.json]
//   partkd build-matrix   --teacher run/teacher.ckpt --data data/ --out run/
//   partkd train-student  --data data/ --teacher run/teacher.ckpt
//                         --matrix run/efficiency_matrix.json --out run/
//                         [--no-kd] [--occlusion-p 0.3] [--reocclude-per-epoch]
//   partkd eval           --checkpoint run/student.ckpt --data data/
//                         --occlusion-p 0.3 [--quality low]
//   partkd plot-matrix    --matrix run/efficiency_matrix.json --out prefix
//   partkd run-experiment --manifest experiment.json
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "partkd/dataset_io.hpp"
#include "partkd/experiment.hpp"
#include "partkd/synth.hpp"
#include "partkd/trainer.hpp"

namespace fs = std::filesystem;
using namespace partkd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open config file: " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

void echo_config(const nlohmann::json& j, const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name);
  if (!out) throw IOError("cannot write config echo into: " + dir);
  out << j.dump(2) << '\n';
}

struct TrainCliOptions {
  std::string config_path;
  bool paper = false;
  std::uint64_t seed = 1;
  int threads = default_thread_count();
  int epochs = -1;
};

TrainConfig resolve_train_config(const TrainCliOptions& opt) {
  // paper profile = the full-scale defaults: 300 frames, nine blocks,
  // 60 epochs with decay at 30/40/50
  TrainConfig cfg = opt.paper ? TrainConfig{} : TrainConfig::fast_profile();
  if (!opt.config_path.empty()) cfg = read_json(opt.config_path).get<TrainConfig>();
  cfg.seed = opt.seed;
  cfg.threads = opt.threads;
  if (opt.epochs > 0) {
    cfg.epochs = opt.epochs;
    std::vector<int> decays;
    for (int e : cfg.lr_decay_epochs)
      if (e < cfg.epochs) decays.push_back(e);
    cfg.lr_decay_epochs = decays;
  }
  cfg.validate();
  return cfg;
}

std::vector<SkeletonSequence> collect_quality(const Dataset& ds, const std::string& quality) {
  std::vector<SkeletonSequence> out;
  if (quality == "high") {
    for (const auto& p : ds.paired) out.push_back(p.high);
  } else if (quality == "low") {
    for (const auto& p : ds.paired) out.push_back(p.low);
    for (const auto& s : ds.solitary) out.push_back(s);
  } else {
    throw ConfigError("quality must be 'high' or 'low'");
  }
  return out;
}

void print_metrics(const Metrics& m) {
  std::cout << "top1 " << std::fixed << std::setprecision(4) << m.top1 << "  top5 " << m.top5
            << '\n';
  std::cout << "per-class:";
  for (double v : m.per_class) std::cout << ' ' << std::setprecision(3) << v;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"part-level knowledge distillation for skeleton action recognition"};
  app.require_subcommand(1);

  // ---------------------------------------------------------------- synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic paired/solitary dataset");
  std::string synth_config, synth_out;
  synth_cmd->add_option("--config", synth_config, "SynthConfig JSON file");
  synth_cmd->add_option("--out", synth_out, "output dataset directory")->required();
  std::uint64_t synth_seed = 0;
  bool synth_seed_set = false;
  synth_cmd->add_option("--seed", synth_seed, "override the config seed")
      ->each([&](const std::string&) { synth_seed_set = true; });

  // ---------------------------------------------------------------- train-teacher
  auto* teach_cmd =
      app.add_subcommand("train-teacher", "pretrain the teacher on high-quality data");
  std::string teach_data, teach_out;
  TrainCliOptions teach_opt;
  teach_cmd->add_option("--data", teach_data, "dataset directory")->required();
  teach_cmd->add_option("--out", teach_out, "output directory")->required();
  teach_cmd->add_option("--config", teach_opt.config_path, "TrainConfig JSON file");
  teach_cmd->add_flag("--paper-profile", teach_opt.paper,
                      "full-scale settings (300 frames, 9 blocks, 60 epochs)");
  teach_cmd->add_option("--seed", teach_opt.seed, "training seed");
  teach_cmd->add_option("--threads", teach_opt.threads, "worker threads");
  teach_cmd->add_option("--epochs", teach_opt.epochs, "override epoch count");

  // ---------------------------------------------------------------- build-matrix
  auto* matrix_cmd =
      app.add_subcommand("build-matrix", "measure the efficiency matrix with the teacher");
  std::string matrix_teacher, matrix_data, matrix_out;
  double holdout_fraction = 0.0;
  int matrix_threads = default_thread_count();
  matrix_cmd->add_option("--teacher", matrix_teacher, "teacher checkpoint")->required();
  matrix_cmd->add_option("--data", matrix_data, "dataset directory")->required();
  matrix_cmd->add_option("--out", matrix_out, "output directory")->required();
  matrix_cmd->add_option("--holdout-fraction", holdout_fraction,
                         "measure on a held-out subset instead of the full set");
  matrix_cmd->add_option("--threads", matrix_threads, "worker threads");

  // ---------------------------------------------------------------- train-student
  auto* student_cmd = app.add_subcommand("train-student", "train the student on low-quality data");
  std::string student_data, student_teacher, student_matrix, student_out;
  TrainCliOptions student_opt;
  bool no_kd = false, reocclude = false, masked_pooling = false;
  double student_occl = 0.0, alpha = -1.0, w_weight = -1.0;
  student_cmd->add_option("--data", student_data, "dataset directory")->required();
  student_cmd->add_option("--teacher", student_teacher, "teacher checkpoint")->required();
  student_cmd->add_option("--matrix", student_matrix, "efficiency matrix dump")->required();
  student_cmd->add_option("--out", student_out, "output directory")->required();
  student_cmd->add_option("--config", student_opt.config_path, "TrainConfig JSON file");
  student_cmd->add_flag("--paper-profile", student_opt.paper, "full-scale settings");
  student_cmd->add_flag("--no-kd", no_kd, "skip distillation (plain low-quality baseline)");
  student_cmd->add_option("--occlusion-p", student_occl, "training occlusion probability");
  student_cmd->add_flag("--reocclude-per-epoch", reocclude, "redraw occlusion masks every epoch");
  student_cmd->add_flag("--masked-pooling", masked_pooling, "exclude padded frames from pooling");
  student_cmd->add_option("--alpha", alpha, "matching-loss weight");
  student_cmd->add_option("--w", w_weight, "positive-pool weight");
  student_cmd->add_option("--seed", student_opt.seed, "training seed");
  student_cmd->add_option("--threads", student_opt.threads, "worker threads");
  student_cmd->add_option("--epochs", student_opt.epochs, "override epoch count");

  // ---------------------------------------------------------------- eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint under joint occlusion");
  std::string eval_ckpt, eval_data, eval_quality = "low", eval_out;
  double eval_occl = 0.0;
  int eval_threads = default_thread_count();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--occlusion-p", eval_occl, "evaluation occlusion probability");
  eval_cmd->add_option("--quality", eval_quality, "which quality side to score (high|low)");
  eval_cmd->add_option("--out", eval_out, "optional metrics JSON output path");
  eval_cmd->add_option("--threads", eval_threads, "worker threads");

  // ---------------------------------------------------------------- plot-matrix
  auto* plot_cmd = app.add_subcommand("plot-matrix", "render a matrix dump as a heatmap");
  std::string plot_matrix, plot_out;
  plot_cmd->add_option("--matrix", plot_matrix, "efficiency matrix dump")->required();
  plot_cmd->add_option("--out", plot_out, "output prefix (.bmp/.json)")->required();

  // ---------------------------------------------------------------- run-experiment
  auto* exp_cmd = app.add_subcommand("run-experiment", "run the full synthetic protocol grid");
  std::string exp_manifest, exp_out_override;
  exp_cmd->add_option("--manifest", exp_manifest, "experiment manifest JSON")->required();
  exp_cmd->add_option("--out", exp_out_override, "override the manifest output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth_cmd) {
      SynthConfig cfg;
      if (!synth_config.empty()) cfg = read_json(synth_config).get<SynthConfig>();
      if (synth_seed_set) cfg.seed = synth_seed;
      const Dataset ds = synth_generate(cfg);
      save_dataset(ds, synth_out);
      echo_config(nlohmann::json(cfg), synth_out, "synth_config.json");
      std::cout << "wrote " << ds.paired.size() << " paired and " << ds.solitary.size()
                << " solitary instances to " << synth_out << '\n';
    } else if (*teach_cmd) {
      const TrainConfig cfg = resolve_train_config(teach_opt);
      const Dataset ds = load_dataset((fs::path(teach_data) / "manifest.json").string());
      const TrainResult result = train_teacher(ds, cfg);
      fs::create_directories(teach_out);
      save_checkpoint(result.checkpoint, (fs::path(teach_out) / "teacher.ckpt").string());
      detail::write_history((fs::path(teach_out) / "teacher_history.log").string(), result);
      echo_config(nlohmann::json(cfg), teach_out, "train_config.json");
      std::cout << "teacher final train accuracy " << result.history.back().train_acc
                << "; checkpoint in " << teach_out << '\n';
    } else if (*matrix_cmd) {
      const Checkpoint teacher = load_checkpoint(matrix_teacher);
      const Dataset ds = load_dataset((fs::path(matrix_data) / "manifest.json").string());
      const EfficiencyMatrix matrix =
          build_efficiency_matrix(teacher, ds, holdout_fraction, matrix_threads);
      fs::create_directories(matrix_out);
      std::vector<std::string> names;
      for (int c = 0; c < ds.num_actions; ++c) names.push_back("action-" + std::to_string(c));
      export_heatmap(matrix, names, (fs::path(matrix_out) / "efficiency_matrix").string());
      std::cout << "efficiency matrix written to " << matrix_out << '\n';
    } else if (*student_cmd) {
      TrainConfig cfg = resolve_train_config(student_opt);
      cfg.occlusion_p = student_occl;
      cfg.reocclude_per_epoch = reocclude;
      cfg.masked_pooling = masked_pooling;
      if (alpha >= 0.0) cfg.distill.alpha = alpha;
      if (w_weight >= 0.0) cfg.distill.w = w_weight;
      cfg.validate();
      const Dataset ds = load_dataset((fs::path(student_data) / "manifest.json").string());
      const Checkpoint teacher = load_checkpoint(student_teacher);
      const EfficiencyMatrix matrix = load_matrix(student_matrix);
      const TrainResult result = train_student(ds, teacher, matrix, cfg, no_kd);
      fs::create_directories(student_out);
      const std::string name = no_kd ? "student_nokd.ckpt" : "student.ckpt";
      save_checkpoint(result.checkpoint, (fs::path(student_out) / name).string());
      detail::write_history((fs::path(student_out) / "student_history.log").string(), result);
      echo_config(nlohmann::json(cfg), student_out, "train_config.json");
      std::cout << "student final train accuracy " << result.history.back().train_acc
                << "; solitary-branch samples " << result.solitary_branch_total
                << "; checkpoint in " << student_out << '\n';
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const Dataset ds = load_dataset((fs::path(eval_data) / "manifest.json").string());
      const auto sequences = collect_quality(ds, eval_quality);
      const Metrics m =
          evaluate(to_model(ckpt), sequences, eval_occl, kEvalOcclusionSeed, eval_threads);
      print_metrics(m);
      if (!eval_out.empty()) {
        nlohmann::json j{{"top1", m.top1}, {"top5", m.top5}, {"per_class", m.per_class}};
        std::ofstream out(eval_out);
        if (!out) throw IOError("cannot write metrics to " + eval_out);
        out << j.dump(2) << '\n';
      }
    } else if (*plot_cmd) {
      std::vector<std::string> names;
      const EfficiencyMatrix matrix = load_matrix(plot_matrix, &names);
      export_heatmap(matrix, names, plot_out);
      std::cout << "heatmap written to " << plot_out << ".bmp\n";
    } else if (*exp_cmd) {
      ExperimentManifest manifest = load_manifest(exp_manifest);
      if (!exp_out_override.empty()) manifest.out_dir = exp_out_override;
      run_experiment(manifest);
      std::cout << "report written to " << (fs::path(manifest.out_dir) / "report.txt").string()
                << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnknownSchema& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
