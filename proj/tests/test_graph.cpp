#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "partkd/graph.hpp"

using namespace partkd;

namespace {
const std::vector<std::pair<std::string, int>> kBuiltins = {
    {"kinect25", 25}, {"coco17", 17}, {"kinect20", 20}, {"penn13", 13}, {"synth16", 16}};
}

TEST_CASE("build_graph returns registered schemas with the documented joint counts") {
  for (const auto& [id, v] : kBuiltins) {
    const auto g = build_graph(id);
    CHECK(g.schema_id == id);
    CHECK(g.V == v);
    CHECK(static_cast<int>(g.joints.size()) == v);
  }
  CHECK_THROWS_AS(build_graph("nosuch"), UnknownSchema);
  CHECK_THROWS_AS(build_part_map("nosuch"), UnknownSchema);
}

TEST_CASE("part maps partition every schema into five disjoint covering parts") {
  for (const auto& [id, v] : kBuiltins) {
    const auto pm = build_part_map(id);
    std::set<int> all;
    std::size_t total = 0;
    for (const auto& part : pm.parts) {
      CHECK_FALSE(part.empty());
      total += part.size();
      all.insert(part.begin(), part.end());
    }
    CHECK(total == static_cast<std::size_t>(v));
    CHECK(all.size() == static_cast<std::size_t>(v));
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == v - 1);
  }
}

TEST_CASE("coco17 parts follow the standard keypoint layout") {
  const auto pm = build_part_map("coco17");
  CHECK(pm.parts[0] == std::vector<int>{0, 1, 2, 3, 4});  // nose, eyes, ears
  CHECK(pm.parts[1] == std::vector<int>{5, 7, 9});
  CHECK(pm.parts[2] == std::vector<int>{6, 8, 10});
  CHECK(pm.parts[3] == std::vector<int>{11, 13, 15});
  CHECK(pm.parts[4] == std::vector<int>{12, 14, 16});
}

TEST_CASE("penn13 head part has exactly one joint") {
  const auto pm = build_part_map("penn13");
  CHECK(pm.parts[0].size() == 1);
}

TEST_CASE("every schema graph is connected from joint 0") {
  for (const auto& [id, v] : kBuiltins) {
    const auto g = build_graph(id);
    auto dist = detail::hop_distances(g, 0);
    for (int j = 0; j < g.V; ++j) CHECK(dist[static_cast<std::size_t>(j)] >= 0);
  }
}

TEST_CASE("uniform normalization of a 2-joint chain") {
  SkeletonGraph chain;
  chain.schema_id = "chain2";
  chain.V = 2;
  chain.joints = {"a", "b"};
  chain.edges = {{0, 1}};
  chain.dims = 3;
  chain.center_joint = 0;
  const auto stack = normalized_adjacency(chain, "uniform");
  REQUIRE(stack.K == 1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(stack.mats[0].at2(i, j) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("unnormalized A+I row sums equal degree+1") {
  const auto g = build_graph("coco17");
  std::vector<int> degree(static_cast<std::size_t>(g.V), 0);
  std::vector<std::vector<int>> a(static_cast<std::size_t>(g.V),
                                  std::vector<int>(static_cast<std::size_t>(g.V), 0));
  for (auto [x, y] : g.edges) {
    a[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = 1;
    a[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = 1;
    degree[static_cast<std::size_t>(x)]++;
    degree[static_cast<std::size_t>(y)]++;
  }
  for (int i = 0; i < g.V; ++i) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < g.V; ++i) {
    int row = 0;
    for (int j = 0; j < g.V; ++j) row += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    CHECK(row == degree[static_cast<std::size_t>(i)] + 1);
  }
}

TEST_CASE("partition strategies split the uniform normalization exactly") {
  for (const auto& [id, v] : kBuiltins) {
    const auto g = build_graph(id);
    const auto uniform = normalized_adjacency(g, "uniform");
    for (const std::string strategy : {"distance", "spatial"}) {
      const auto stack = normalized_adjacency(g, strategy);
      CHECK(stack.K == (strategy == "distance" ? 2 : 3));
      for (int i = 0; i < g.V; ++i) {
        for (int j = 0; j < g.V; ++j) {
          double sum = 0.0;
          for (const auto& m : stack.mats) {
            CHECK(m.at2(i, j) >= 0.0);
            sum += m.at2(i, j);
          }
          CHECK(sum == Catch::Approx(uniform.mats[0].at2(i, j)).margin(1e-15));
        }
      }
    }
  }
}

TEST_CASE("uniform normalization is symmetric with positive diagonal") {
  for (const auto& [id, v] : kBuiltins) {
    const auto g = build_graph(id);
    const auto stack = normalized_adjacency(g, "uniform");
    for (int i = 0; i < g.V; ++i) {
      CHECK(stack.mats[0].at2(i, i) > 0.0);
      for (int j = 0; j < g.V; ++j)
        CHECK(std::abs(stack.mats[0].at2(i, j) - stack.mats[0].at2(j, i)) < 1e-12);
    }
  }
}

TEST_CASE("unknown adjacency strategy is a config error") {
  const auto g = build_graph("coco17");
  CHECK_THROWS_AS(normalized_adjacency(g, "banana"), ConfigError);
}

TEST_CASE("shipped schema resource files match the embedded documents") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(PARTKD_SOURCE_DIR) / "resources" / "schemas";
  std::size_t matched = 0;
  for (auto text : partkd::detail::k_builtin_schemas) {
    const auto doc = nlohmann::json::parse(text);
    const auto file = dir / (doc.at("schema_id").get<std::string>() + ".json");
    REQUIRE(fs::exists(file));
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(nlohmann::json::parse(ss.str()) == doc);
    ++matched;
  }
  CHECK(matched == 5);
}

TEST_CASE("schemas can be registered from files without code changes") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "partkd_toy_schema.json";
  {
    std::ofstream out(path);
    out << R"({
      "schema_id": "toy6",
      "dims": 3,
      "center_joint": 0,
      "joints": ["c", "h", "la", "ra", "ll", "rl"],
      "edges": [[0,1],[0,2],[0,3],[0,4],[0,5]],
      "parts": {"head": [0,1], "left_arm": [2], "right_arm": [3],
                 "left_leg": [4], "right_leg": [5]}
    })";
  }
  register_schema_file(path.string());
  const auto g = build_graph("toy6");
  CHECK(g.V == 6);
  CHECK(build_part_map("toy6").parts[0].size() == 2);
  fs::remove(path);
}

TEST_CASE("malformed schema documents are rejected") {
  CHECK_THROWS_AS(register_schema_document("{ not json"), MalformedRecord);
  CHECK_THROWS_AS(register_schema_document(R"({"schema_id":"x"})"), MalformedRecord);
  // joint 5 missing from all parts
  CHECK_THROWS_AS(register_schema_document(R"({
      "schema_id": "bad", "dims": 3, "center_joint": 0,
      "joints": ["a","b","c","d","e","f"],
      "edges": [[0,1],[0,2],[0,3],[0,4],[0,5]],
      "parts": {"head": [0,1], "left_arm": [2], "right_arm": [3],
                 "left_leg": [4], "right_leg": [4]}
    })"),
                  ValidationError);
  // disconnected graph
  CHECK_THROWS_AS(register_schema_document(R"({
      "schema_id": "bad2", "dims": 3, "center_joint": 0,
      "joints": ["a","b","c","d","e","f"],
      "edges": [[0,1],[0,2],[0,3],[0,4]],
      "parts": {"head": [0,1], "left_arm": [2], "right_arm": [3],
                 "left_leg": [4], "right_leg": [5]}
    })"),
                  ValidationError);
}
