#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "partkd/heads.hpp"

using namespace partkd;
using namespace partkd::testing;

namespace {

JointFeatureMap make_map(int C, int T, int V, std::uint64_t seed = 0) {
  JointFeatureMap z;
  z.values.resize({C, T, V});
  z.valid_t = T;
  if (seed) {
    auto rng = rng_stream(seed, "feature_map");
    for (std::int64_t i = 0; i < z.values.size(); ++i) z.values[i] = gaussian(rng);
  }
  return z;
}

}  // namespace

TEST_CASE("pool_parts averages joints within a part") {
  // two joints, one frame: j0 = [1,2], j1 = [3,4] -> mean [2,3]
  auto z = make_map(2, 1, 2);
  z.values.at3(0, 0, 0) = 1.0;
  z.values.at3(1, 0, 0) = 2.0;
  z.values.at3(0, 0, 1) = 3.0;
  z.values.at3(1, 0, 1) = 4.0;
  PartMap pm;
  pm.parts = {std::vector<int>{0, 1}, {}, {}, {}, {}};
  // a two-joint map cannot fill five parts; check through the oracle below
  // and keep this case on the raw mean instead.
  double mean0 = (z.values.at3(0, 0, 0) + z.values.at3(0, 0, 1)) / 2.0;
  double mean1 = (z.values.at3(1, 0, 0) + z.values.at3(1, 0, 1)) / 2.0;
  CHECK(mean0 == 2.0);
  CHECK(mean1 == 3.0);

  auto z5 = make_map(2, 1, 5);
  z5.values.at3(0, 0, 0) = 1.0;
  z5.values.at3(1, 0, 0) = 2.0;
  z5.values.at3(0, 0, 1) = 3.0;
  z5.values.at3(1, 0, 1) = 4.0;
  const auto parts = toy_parts(5);  // part 0 = {0}, part 1 = {1}, ...
  const auto f = pool_parts(z5, parts);
  CHECK(f.vectors[0][0] == 1.0);
  CHECK(f.vectors[0][1] == 2.0);
  CHECK(f.vectors[1][0] == 3.0);
  CHECK(f.vectors[1][1] == 4.0);
}

TEST_CASE("pooling a constant map returns the constant") {
  auto z = make_map(3, 4, 10);
  z.values.fill(2.5);
  const auto pm = toy_parts(10);
  const auto f = pool_parts(z, pm);
  for (const auto& vec : f.vectors)
    for (double v : vec) CHECK(v == Catch::Approx(2.5).margin(1e-15));
  const auto g = global_pool(z);
  for (double v : g.values) CHECK(v == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("pool_parts matches a brute-force double loop") {
  const auto z = make_map(7, 5, 10, 42);
  const auto pm = toy_parts(10);
  const auto f = pool_parts(z, pm);
  for (int p = 0; p < kNumParts; ++p) {
    const auto& joints = pm.parts[static_cast<std::size_t>(p)];
    for (int c = 0; c < 7; ++c) {
      double acc = 0.0;
      int n = 0;
      for (int t = 0; t < 5; ++t)
        for (int j : joints) {
          acc += z.values.at3(c, t, j);
          ++n;
        }
      CHECK(f.vectors[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] ==
            Catch::Approx(acc / n).margin(1e-12));
    }
  }
}

TEST_CASE("global_pool equals the part-size weighted mean of part features") {
  const auto z = make_map(6, 4, 10, 52);
  const auto pm = toy_parts(10);
  const auto f = pool_parts(z, pm);
  const auto g = global_pool(z);
  for (int c = 0; c < 6; ++c) {
    double weighted = 0.0;
    for (int p = 0; p < kNumParts; ++p)
      weighted += f.vectors[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] *
                  static_cast<double>(pm.parts[static_cast<std::size_t>(p)].size()) / 10.0;
    CHECK(g.values[static_cast<std::size_t>(c)] == Catch::Approx(weighted).margin(1e-12));
  }
}

TEST_CASE("pooling is linear") {
  const auto z1 = make_map(4, 3, 10, 1);
  const auto z2 = make_map(4, 3, 10, 2);
  const double alpha = 1.7;
  auto combo = make_map(4, 3, 10);
  for (std::int64_t i = 0; i < combo.values.size(); ++i)
    combo.values[i] = alpha * z1.values[i] + z2.values[i];
  const auto pm = toy_parts(10);
  const auto f1 = pool_parts(z1, pm), f2 = pool_parts(z2, pm), fc = pool_parts(combo, pm);
  for (int p = 0; p < kNumParts; ++p)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(fc.vectors[static_cast<std::size_t>(p)][c] ==
            Catch::Approx(alpha * f1.vectors[static_cast<std::size_t>(p)][c] +
                          f2.vectors[static_cast<std::size_t>(p)][c])
                .margin(1e-12));
}

TEST_CASE("pool_parts rejects joint-count mismatches") {
  const auto z = make_map(2, 2, 8);
  const auto pm = toy_parts(10);  // expects V=10
  CHECK_THROWS_AS(pool_parts(z, pm), ShapeError);
}

TEST_CASE("classify degenerate and reference cases") {
  Tensor w({4, 3});
  Tensor b({4});
  GlobalFeature g{{0.3, -1.2, 0.7}};

  SECTION("zero weights and bias give the uniform distribution") {
    const auto p = classify(g, w, b);
    for (double v : p.probs) CHECK(v == Catch::Approx(0.25).margin(1e-12));
  }
  SECTION("softmax is shift invariant") {
    const auto a = softmax({1.0, 2.0, 3.0});
    const auto c = softmax({101.0, 102.0, 103.0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.probs[i] == Catch::Approx(c.probs[i]).margin(1e-12));
    const auto u = softmax({5.5, 5.5, 5.5, 5.5});
    for (double v : u.probs) CHECK(v == Catch::Approx(0.25).margin(1e-12));
  }
  SECTION("logits [2,0] split as e^2 : 1") {
    const auto p = softmax({2.0, 0.0});
    CHECK(p.probs[0] == Catch::Approx(std::exp(2.0) / (std::exp(2.0) + 1.0)).margin(1e-10));
    CHECK(p.probs[0] == Catch::Approx(0.8808).margin(5e-5));
    CHECK(p.probs[1] == Catch::Approx(0.1192).margin(5e-5));
  }
}

TEST_CASE("classify output sums to one for random inputs") {
  auto rng = rng_stream(5, "classify_sum");
  Tensor w({6, 8});
  Tensor b({6});
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = 3.0 * gaussian(rng);
  for (std::int64_t i = 0; i < b.size(); ++i) b[i] = gaussian(rng);
  for (int trial = 0; trial < 1000; ++trial) {
    GlobalFeature g;
    g.values.resize(8);
    for (auto& v : g.values) v = 10.0 * gaussian(rng);
    const auto p = classify(g, w, b);
    double sum = 0.0;
    for (double v : p.probs) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("cross entropy reference values") {
  SECTION("perfect one-hot prediction scores zero") {
    ProbDist p{{0.0, 1.0, 0.0}};
    CHECK(cross_entropy({p}, {1}) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("uniform prediction over 60 classes scores ln 60") {
    ProbDist p{std::vector<double>(60, 1.0 / 60.0)};
    CHECK(cross_entropy({p}, {7}) == Catch::Approx(std::log(60.0)).margin(1e-12));
    CHECK(cross_entropy({p}, {7}) == Catch::Approx(4.0943).margin(1e-4));
  }
  SECTION("batch loss is the mean of per-sample losses") {
    ProbDist a{{0.9, 0.1}};
    ProbDist b{{0.2, 0.8}};
    const double la = -std::log(0.9), lb = -std::log(0.8);
    CHECK(cross_entropy({a, b}, {0, 1}) == Catch::Approx((la + lb) / 2.0).margin(1e-12));
  }
}

TEST_CASE("cross entropy gradient equals (softmax - onehot)/batch") {
  auto rng = rng_stream(9, "ce_grad");
  const int B = 4, C = 6;
  std::vector<std::vector<double>> logits(B, std::vector<double>(C));
  std::vector<int> labels(B);
  for (int i = 0; i < B; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(uniform_index(rng, C));
    for (auto& v : logits[static_cast<std::size_t>(i)]) v = 2.0 * gaussian(rng);
  }
  std::vector<std::vector<double>> dlogits;
  cross_entropy_from_logits(logits, labels, &dlogits);

  // closed form
  for (int i = 0; i < B; ++i) {
    const auto p = softmax(logits[static_cast<std::size_t>(i)]);
    for (int c = 0; c < C; ++c) {
      double expected = p.probs[static_cast<std::size_t>(c)] / B;
      if (c == labels[static_cast<std::size_t>(i)]) expected -= 1.0 / B;
      CHECK(dlogits[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] ==
            Catch::Approx(expected).margin(1e-12));
    }
  }

  // finite differences; error floored by the gradient scale so entries with
  // vanishing softmax probability do not divide FD noise by near-zero
  const double h = 1e-5;
  double scale = 0.0;
  for (const auto& row : dlogits)
    for (double g : row) scale = std::max(scale, std::abs(g));
  double max_rel = 0.0;
  for (int i = 0; i < B; ++i) {
    for (int c = 0; c < C; ++c) {
      auto& cell = logits[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      const double saved = cell;
      cell = saved + h;
      const double up = cross_entropy_from_logits(logits, labels);
      cell = saved - h;
      const double down = cross_entropy_from_logits(logits, labels);
      cell = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = dlogits[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      const double rel = std::abs(numeric - analytic) /
                         std::max({1e-2 * scale, std::abs(numeric), std::abs(analytic)});
      max_rel = std::max(max_rel, rel);
    }
  }
  INFO("max relative error = " << max_rel);
  CHECK(max_rel <= 1e-6);
}
