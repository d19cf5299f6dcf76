#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "partkd/sequence.hpp"

using namespace partkd;

namespace {

SkeletonSequence make_sequence(int length, int bodies, int V = 4, std::uint64_t seed = 7) {
  SkeletonSequence seq;
  seq.instance_id = "seq";
  seq.schema_id = "toy";
  seq.label = 0;
  seq.quality = Quality::low;
  seq.length = length;
  seq.bodies = bodies;
  seq.V = V;
  seq.allocate();
  auto rng = rng_stream(seed, "fill");
  for (auto& v : seq.coords) v = static_cast<float>(u01(rng) + 0.25);  // strictly nonzero
  return seq;
}

int zeroed_joints(const SkeletonSequence& seq) {
  int count = 0;
  for (int v = 0; v < seq.V; ++v) {
    for (int m = 0; m < seq.bodies; ++m) {
      bool all_zero = true;
      for (int c = 0; c < kInputChannels && all_zero; ++c)
        for (int t = 0; t < seq.length && all_zero; ++t)
          if (seq.at(c, t, v, m) != 0.0f) all_zero = false;
      if (all_zero) ++count;
    }
  }
  return count;
}

}  // namespace

TEST_CASE("pad_or_truncate zero-pads short single-body sequences") {
  const auto seq = make_sequence(100, 1, 5);
  const auto out = pad_or_truncate(seq);
  REQUIRE(out.frames == 300);
  REQUIRE(out.valid_frames == 100);
  for (int c = 0; c < 3; ++c) {
    for (int t = 0; t < 300; ++t) {
      for (int v = 0; v < 5; ++v) {
        if (t < 100) {
          CHECK(out.at(c, t, v, 0) == static_cast<double>(seq.at(c, t, v, 0)));
          CHECK(out.at(c, t, v, 1) == 0.0);
        } else {
          CHECK(out.at(c, t, v, 0) == 0.0);
          CHECK(out.at(c, t, v, 1) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("pad_or_truncate discards frames beyond the budget") {
  const auto seq = make_sequence(400, 2, 3);
  const auto out = pad_or_truncate(seq);
  REQUIRE(out.valid_frames == 300);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 300; ++t)
      for (int v = 0; v < 3; ++v)
        for (int m = 0; m < 2; ++m)
          CHECK(out.at(c, t, v, m) == static_cast<double>(seq.at(c, t, v, m)));
}

TEST_CASE("pad_or_truncate is the identity for exact-size input") {
  const auto seq = make_sequence(300, 2, 3);
  const auto out = pad_or_truncate(seq);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 300; ++t)
      for (int v = 0; v < 3; ++v)
        for (int m = 0; m < 2; ++m)
          CHECK(out.at(c, t, v, m) == static_cast<double>(seq.at(c, t, v, m)));
}

TEST_CASE("pad_or_truncate rejects empty sequences") {
  auto seq = make_sequence(1, 1);
  seq.length = 0;
  seq.allocate();
  CHECK_THROWS_AS(pad_or_truncate(seq), EmptySequence);
}

TEST_CASE("occlude_joints edge probabilities") {
  const auto seq = make_sequence(6, 2, 9);
  SECTION("p=0 is the identity") {
    const auto out = occlude_joints(seq, 0.0, 123);
    CHECK(out.coords == seq.coords);
  }
  SECTION("p=1 zeroes everything") {
    const auto out = occlude_joints(seq, 1.0, 123);
    for (float v : out.coords) CHECK(v == 0.0f);
  }
  SECTION("deterministic given seed") {
    const auto a = occlude_joints(seq, 0.4, 99);
    const auto b = occlude_joints(seq, 0.4, 99);
    CHECK(a.coords == b.coords);
  }
  SECTION("out-of-range probability is a config error") {
    CHECK_THROWS_AS(occlude_joints(seq, 1.5, 1), ConfigError);
    CHECK_THROWS_AS(occlude_joints(seq, -0.1, 1), ConfigError);
  }
}

TEST_CASE("occlusion zeroes whole joints across frames and channels") {
  const auto seq = make_sequence(8, 1, 6);
  const auto out = occlude_joints(seq, 0.5, 42);
  for (int v = 0; v < 6; ++v) {
    bool first_zero = out.at(0, 0, v, 0) == 0.0f;
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 8; ++t)
        CHECK((out.at(c, t, v, 0) == 0.0f) == first_zero);
    if (!first_zero)
      for (int c = 0; c < 3; ++c)
        for (int t = 0; t < 8; ++t)
          CHECK(out.at(c, t, v, 0) == seq.at(c, t, v, 0));
  }
}

TEST_CASE("occlusion count matches the binomial mean at p=0.3, V=17") {
  const auto seq = make_sequence(2, 1, 17);
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    total += zeroed_joints(occlude_joints(seq, 0.3, static_cast<std::uint64_t>(i)));
  const double mean = total / draws;  // binomial mean = 17 * 0.3 = 5.1
  CHECK(mean >= 4.9);
  CHECK(mean <= 5.3);
}

TEST_CASE("occlusion masks differ across seeds") {
  const auto seq = make_sequence(1, 1, 25);
  std::set<std::vector<float>> masks;
  for (int i = 0; i < 200; ++i)
    masks.insert(occlude_joints(seq, 0.5, 1000 + static_cast<std::uint64_t>(i)).coords);
  CHECK(masks.size() == 200);
}

TEST_CASE("zeroed fraction is nondecreasing in p on average") {
  const auto seq = make_sequence(2, 1, 10);
  const double ps[3] = {0.1, 0.4, 0.8};
  double means[3];
  for (int k = 0; k < 3; ++k) {
    double total = 0.0;
    for (int i = 0; i < 1000; ++i)
      total += zeroed_joints(occlude_joints(seq, ps[k], static_cast<std::uint64_t>(77 * i + k)));
    means[k] = total / 1000.0;
  }
  CHECK(means[0] <= means[1]);
  CHECK(means[1] <= means[2]);
}

TEST_CASE("occlude_part zeroes exactly the selected part") {
  const auto seq = make_sequence(5, 2, 6);
  PartMap pm;
  pm.schema_id = "toy";
  pm.parts = {std::vector<int>{0, 1}, {2}, {3}, {4}, {5}};

  const auto out = occlude_part(seq, pm, 0);
  for (int v : {0, 1})
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 5; ++t)
        for (int m = 0; m < 2; ++m)
          CHECK(out.at(c, t, v, m) == 0.0f);
  for (int v = 2; v < 6; ++v)
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 5; ++t)
        for (int m = 0; m < 2; ++m)
          CHECK(out.at(c, t, v, m) == seq.at(c, t, v, m));

  SECTION("occluding all five parts zeroes the whole sequence") {
    auto all = seq;
    for (int p = 0; p < kNumParts; ++p) all = occlude_part(all, pm, p);
    for (float v : all.coords) CHECK(v == 0.0f);
  }
  SECTION("occlude_part is idempotent") {
    const auto once = occlude_part(seq, pm, 2);
    const auto twice = occlude_part(once, pm, 2);
    CHECK(once.coords == twice.coords);
  }
  SECTION("part id out of range is a config error") {
    CHECK_THROWS_AS(occlude_part(seq, pm, 5), ConfigError);
    CHECK_THROWS_AS(occlude_part(seq, pm, -1), ConfigError);
  }
}
