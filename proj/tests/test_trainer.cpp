#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "partkd/synth.hpp"
#include "partkd/trainer.hpp"

using namespace partkd;

namespace {

TrainConfig micro_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.lr = 0.02;  // the full-scale rate oscillates at toy batch counts
  cfg.frames = 16;
  cfg.epochs = 3;
  cfg.lr_decay_epochs = {2};
  cfg.seed = seed;
  cfg.threads = 2;
  cfg.backbone.num_blocks = 2;
  cfg.backbone.channel_plan = {6, 8};
  cfg.backbone.temporal_strides = {1, 2};
  cfg.distill.batch_low = 8;
  cfg.distill.batch_high = 8;
  return cfg;
}

SynthConfig micro_data(std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.num_actions = 4;
  cfg.samples_per_action = 10;
  cfg.frame_length = 16;
  cfg.solitary_fraction = 0.2;
  cfg.lowq_noise_std = 0.02;
  cfg.lowq_joint_drop = 0.05;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("learning-rate schedule hits the documented values") {
  TrainConfig cfg;  // full-scale defaults: 0.1 decayed x0.1 at 30, 40, 50
  const std::pair<int, int> expected[] = {{0, 0},  {29, 0}, {30, 1},
                                          {40, 2}, {50, 3}, {59, 3}};
  for (const auto& [epoch, decays] : expected) {
    double lr = 0.1;  // independent evaluation of the same decay rule
    for (int k = 0; k < decays; ++k) lr *= 0.1;
    CHECK(cfg.lr_at(epoch) == lr);
    const double nominal[] = {0.1, 0.01, 0.001, 0.0001};
    CHECK(cfg.lr_at(epoch) == Catch::Approx(nominal[decays]).epsilon(1e-12));
  }
}

TEST_CASE("train config validation") {
  auto cfg = micro_config();
  cfg.lr_decay_epochs = {2, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = micro_config();
  cfg.lr_decay_epochs = {5};  // >= epochs
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = micro_config();
  cfg.occlusion_p = 1.4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("teacher training starts near ln C and is reproducible") {
  const auto ds = synth_generate(micro_data());
  const auto cfg = micro_config();
  const auto run1 = train_teacher(ds, cfg);
  const auto run2 = train_teacher(ds, cfg);

  // fresh initialization predicts near-uniform probabilities
  const double ln_c = std::log(4.0);
  CHECK(run1.step_loss_trace.front() >= 0.9 * ln_c);
  CHECK(run1.step_loss_trace.front() <= 1.1 * ln_c);

  REQUIRE(run1.step_loss_trace.size() == run2.step_loss_trace.size());
  for (std::size_t i = 0; i < run1.step_loss_trace.size(); ++i)
    CHECK(std::abs(run1.step_loss_trace[i] - run2.step_loss_trace[i]) <= 1e-12);

  for (const auto& log : run1.history) {
    CHECK(std::isfinite(log.loss_c));
    CHECK(log.lr == cfg.lr_at(log.epoch));
  }

  // two runs agree parameter for parameter
  for (std::size_t i = 0; i < run1.checkpoint.params.size(); ++i)
    for (std::int64_t j = 0; j < run1.checkpoint.params[i].value.size(); ++j)
      CHECK(run1.checkpoint.params[i].value[j] == run2.checkpoint.params[i].value[j]);
}

TEST_CASE("a converged model evaluates perfectly on its training data") {
  auto dcfg = micro_data(5);
  dcfg.num_actions = 2;
  dcfg.samples_per_action = 8;
  dcfg.lowq_noise_std = 0.0;
  dcfg.lowq_joint_drop = 0.0;
  dcfg.solitary_fraction = 0.0;
  const auto ds = synth_generate(dcfg);

  auto cfg = micro_config(7);
  cfg.epochs = 24;
  cfg.lr_decay_epochs = {18, 22};
  const auto run = train_teacher(ds, cfg);
  REQUIRE(run.history.back().train_acc == 1.0);

  std::vector<SkeletonSequence> test;
  for (const auto& p : ds.paired) test.push_back(p.high);
  const auto metrics = evaluate(to_model(run.checkpoint), test, 0.0);
  CHECK(metrics.top1 == 1.0);
  CHECK(metrics.top5 == 1.0);
  for (int c = 0; c < 2; ++c)
    for (int p = 0; p < 2; ++p)
      CHECK(metrics.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)] ==
            (c == p ? 8 : 0));
}

TEST_CASE("a constant predictor scores 1/C on balanced classes") {
  const auto ds = synth_generate(micro_data(11));
  auto cfg = micro_config();
  Model model = make_model(cfg.backbone, "synth16", ds.num_actions, cfg.frames, 3);
  model.params.at("head.w").zero();
  model.params.at("head.b").zero();
  model.params.at("head.b")[2] = 5.0;  // always predicts class 2

  std::vector<SkeletonSequence> test;
  for (const auto& p : ds.paired) test.push_back(p.high);  // 8 per class
  const auto metrics = evaluate(model, test, 0.0);
  CHECK(metrics.top1 == Catch::Approx(0.25).margin(1e-12));
  for (const auto& [id, pred] : metrics.predictions) CHECK(pred == 2);
}

TEST_CASE("metrics are internally consistent under occlusion") {
  const auto ds = synth_generate(micro_data(13));
  auto cfg = micro_config(13);
  cfg.epochs = 2;
  cfg.lr_decay_epochs = {1};
  const auto run = train_teacher(ds, cfg);

  std::vector<SkeletonSequence> test;
  for (const auto& p : ds.paired) test.push_back(p.high);
  const auto model = to_model(run.checkpoint);
  const auto metrics = evaluate(model, test, 0.4);

  CHECK(metrics.top5 >= metrics.top1);
  std::int64_t diag = 0, total = 0;
  for (int c = 0; c < ds.num_actions; ++c) {
    std::int64_t row = 0;
    for (int p = 0; p < ds.num_actions; ++p)
      row += metrics.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
    CHECK(row == 8);  // balanced micro set
    diag += metrics.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    total += row;
  }
  CHECK(metrics.top1 == Catch::Approx(static_cast<double>(diag) / total).margin(1e-12));

  // recompute top1 from stored predictions
  std::map<std::string, int> truth;
  for (const auto& seq : test) truth[seq.instance_id] = seq.label;
  std::int64_t hits = 0;
  for (const auto& [id, pred] : metrics.predictions)
    if (truth.at(id) == pred) ++hits;
  CHECK(metrics.top1 == Catch::Approx(static_cast<double>(hits) / total).margin(1e-12));

  // deterministic evaluation seed
  const auto again = evaluate(model, test, 0.4);
  CHECK(again.top1 == metrics.top1);
  CHECK(again.predictions == metrics.predictions);

  CHECK_THROWS_AS(evaluate(model, {}, 0.0), ConfigError);
}

TEST_CASE("alpha=0 student training equals the no-KD baseline bitwise") {
  const auto ds = synth_generate(micro_data(17));
  auto cfg = micro_config(17);
  cfg.epochs = 2;
  cfg.lr_decay_epochs = {1};

  const auto teacher = train_teacher(ds, cfg);
  const auto matrix = build_efficiency_matrix(teacher.checkpoint, ds, 0.0, cfg.threads);

  auto cfg_a = cfg;
  cfg_a.distill.alpha = 0.0;
  const auto with_machinery = train_student(ds, teacher.checkpoint, matrix, cfg_a, false);
  const auto baseline = train_student(ds, teacher.checkpoint, matrix, cfg_a, true);

  REQUIRE(with_machinery.step_loss_trace.size() == baseline.step_loss_trace.size());
  for (std::size_t i = 0; i < baseline.step_loss_trace.size(); ++i)
    CHECK(std::abs(with_machinery.step_loss_trace[i] - baseline.step_loss_trace[i]) <= 1e-12);
  for (std::size_t i = 0; i < baseline.checkpoint.params.size(); ++i)
    for (std::int64_t j = 0; j < baseline.checkpoint.params[i].value.size(); ++j)
      CHECK(with_machinery.checkpoint.params[i].value[j] ==
            baseline.checkpoint.params[i].value[j]);
}

TEST_CASE("student training exercises the solitary branch and logs both losses") {
  const auto ds = synth_generate(micro_data(19));  // 20% solitary
  auto cfg = micro_config(19);
  cfg.epochs = 2;
  cfg.lr_decay_epochs = {1};

  const auto teacher = train_teacher(ds, cfg);
  const auto matrix = build_efficiency_matrix(teacher.checkpoint, ds, 0.0, cfg.threads);
  const auto student = train_student(ds, teacher.checkpoint, matrix, cfg);

  CHECK(student.solitary_branch_total > 0);
  for (const auto& log : student.history) {
    CHECK(std::isfinite(log.loss_c));
    CHECK(std::isfinite(log.loss_pmsc));
    CHECK(log.loss_pmsc > 0.0);
  }

  // determinism of the full student pipeline
  const auto student2 = train_student(ds, teacher.checkpoint, matrix, cfg);
  REQUIRE(student.step_loss_trace.size() == student2.step_loss_trace.size());
  for (std::size_t i = 0; i < student.step_loss_trace.size(); ++i)
    CHECK(student.step_loss_trace[i] == student2.step_loss_trace[i]);
}

TEST_CASE("student training rejects mismatched feature widths") {
  const auto ds = synth_generate(micro_data(23));
  auto cfg = micro_config(23);
  cfg.epochs = 1;
  cfg.lr_decay_epochs = {};
  const auto teacher = train_teacher(ds, cfg);
  const auto matrix = build_efficiency_matrix(teacher.checkpoint, ds, 0.0, cfg.threads);

  auto bad = cfg;
  bad.backbone.channel_plan = {6, 12};  // student C_feat != teacher C_feat
  CHECK_THROWS_AS(train_student(ds, teacher.checkpoint, matrix, bad), ConfigError);
}

TEST_CASE("efficiency matrix built from a trained teacher is well formed") {
  const auto ds = synth_generate(micro_data(29));
  auto cfg = micro_config(29);
  cfg.epochs = 4;
  cfg.lr_decay_epochs = {3};
  const auto teacher = train_teacher(ds, cfg);
  const auto matrix = build_efficiency_matrix(teacher.checkpoint, ds, 0.0, cfg.threads);

  REQUIRE(matrix.num_actions() == ds.num_actions);
  for (int c = 0; c < ds.num_actions; ++c) {
    double sum = 0.0;
    for (int p = 0; p < kNumParts; ++p) {
      CHECK(matrix.raw.at2(c, p) >= 0.0);
      CHECK(matrix.raw.at2(c, p) <= 1.0);
      sum += matrix.normalized.at2(c, p);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }

  // holdout knob keeps the shape and the row normalization
  const auto held = build_efficiency_matrix(teacher.checkpoint, ds, 0.5, cfg.threads);
  CHECK(held.num_actions() == ds.num_actions);
  for (int c = 0; c < ds.num_actions; ++c)
    CHECK(held.evaluated.at2(c, 0) <= matrix.evaluated.at2(c, 0));
}
