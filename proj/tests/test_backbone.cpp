#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "partkd/backbone.hpp"

using namespace partkd;
using namespace partkd::testing;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig cfg;
  cfg.num_blocks = 2;
  cfg.channel_plan = {6, 10};
  cfg.temporal_strides = {1, 2};
  return cfg;
}

double forward_sum(const Model& m, const ModelInput& in) {
  const auto z = forward_features(in, m);
  double s = 0.0;
  for (std::int64_t i = 0; i < z.values.size(); ++i) s += z.values[i];
  return s;
}

}  // namespace

TEST_CASE("init_params is deterministic and starts the edge mask at ones") {
  const auto g = build_graph("coco17");
  const auto cfg = BackboneConfig::fast_profile();
  const auto a = init_params(cfg, g, 11);
  const auto b = init_params(cfg, g, 11);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    for (std::int64_t j = 0; j < a[i].value.size(); ++j)
      CHECK(a[i].value[j] == b[i].value[j]);
  }
  const auto c = init_params(cfg, g, 12);
  CHECK(c.at("block0.spatial.w")[0] != a.at("block0.spatial.w")[0]);

  for (int i = 0; i < cfg.num_blocks; ++i) {
    const auto& mask = a.at("block" + std::to_string(i) + ".mask");
    for (std::int64_t j = 0; j < mask.size(); ++j) CHECK(mask[j] == 1.0);
  }
}

TEST_CASE("parameter count of the default stack on kinect25 matches per-layer arithmetic") {
  const auto g = build_graph("kinect25");
  BackboneConfig cfg;  // defaults: 9 blocks, spatial partition
  const auto params = init_params(cfg, g, 3);

  // Independent tally: spatial K*Cout*Cin + Cout, two norms 2*Cout each,
  // temporal Cout*Cout*k + Cout, mask K*V*V, residual conv Cin*Cout + Cout
  // when shape or stride changes.
  const int K = 3, V = 25, k_t = 9;
  std::int64_t expected = 0;
  int c_in = 3;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const int c_out = cfg.channel_plan[static_cast<std::size_t>(i)];
    const int stride = cfg.temporal_strides[static_cast<std::size_t>(i)];
    expected += static_cast<std::int64_t>(K) * c_out * c_in + c_out;  // spatial
    expected += 2 * c_out;                                            // norm1
    expected += static_cast<std::int64_t>(c_out) * c_out * k_t + c_out;  // temporal
    expected += 2 * c_out;                                            // norm2
    expected += static_cast<std::int64_t>(K) * V * V;                 // mask
    if (c_in != c_out || stride != 1) expected += static_cast<std::int64_t>(c_in) * c_out + c_out;
    c_in = c_out;
  }
  CHECK(params.count() == expected);
  CHECK(params.count() == 2290091);
}

TEST_CASE("temporal shrinkage follows ceil over the stride plan") {
  const std::vector<std::vector<int>> plans = {
      {1, 1, 1, 1, 2, 1, 1, 2, 1}, {1, 2, 1}, {2, 2}, {1, 1, 1}};
  for (const auto& plan : plans) {
    BackboneConfig cfg;
    cfg.num_blocks = static_cast<int>(plan.size());
    cfg.channel_plan.assign(plan.size(), 8);
    cfg.temporal_strides = plan;
    for (int t : {300, 60, 45, 7}) {
      int expected = t;
      for (int s : plan) expected = (expected + s - 1) / s;  // ceil
      CHECK(cfg.temporal_out(t) == expected);
    }
  }
  BackboneConfig def;
  CHECK(def.temporal_out(300) == 75);
}

TEST_CASE("forward output shape and per-sample determinism") {
  const auto g = build_graph("coco17");
  const auto cfg = BackboneConfig::fast_profile();
  const auto m = toy_model(cfg, g, 6, 60, 5);
  const auto in = random_input(60, g.V, 21);

  const auto z = forward_features(in, m);
  CHECK(z.channels() == 16);
  CHECK(z.t_out() == 30);
  CHECK(z.joints() == 17);
  CHECK(z.values.all_finite());

  const auto z2 = forward_features(in, m);
  for (std::int64_t i = 0; i < z.values.size(); ++i) CHECK(z.values[i] == z2.values[i]);
}

TEST_CASE("default stack maps 300 input frames to 75 temporal steps") {
  const auto g = build_graph("coco17");
  BackboneConfig cfg;  // paper-scale defaults
  const auto m = toy_model(cfg, g, 6, 300, 5);
  auto in = random_input(300, g.V, 2);
  const auto z = forward_features(in, m);
  CHECK(z.channels() == 256);
  CHECK(z.t_out() == 75);
  CHECK(z.values.all_finite());
}

TEST_CASE("all-zero input produces a finite feature map") {
  const auto g = build_graph("coco17");
  const auto m = toy_model(BackboneConfig::fast_profile(), g, 6, 60, 5);
  ModelInput in;
  in.V = g.V;
  in.frames = 60;
  in.valid_frames = 60;
  in.coords.assign(static_cast<std::size_t>(3 * 60 * g.V * kModelBodies), 0.0);
  const auto z = forward_features(in, m);
  CHECK(z.values.all_finite());
}

TEST_CASE("two-body inputs average the per-body maps") {
  const auto g = build_graph("coco17");
  const auto m = toy_model(BackboneConfig::fast_profile(), g, 6, 20, 5);
  auto both = random_input(20, g.V, 33, /*two_bodies=*/true);

  auto only0 = both;
  auto only1 = both;
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 20; ++t)
      for (int v = 0; v < g.V; ++v) {
        only0.at(c, t, v, 1) = 0.0;
        only1.at(c, t, v, 0) = 0.0;
      }
  const auto z_both = forward_features(both, m);
  const auto z0 = forward_features(only0, m);
  const auto z1 = forward_features(only1, m);
  for (std::int64_t i = 0; i < z_both.values.size(); ++i)
    CHECK(z_both.values[i] ==
          Catch::Approx(0.5 * (z0.values[i] + z1.values[i])).margin(1e-12));
}

TEST_CASE("analytic parameter gradients match finite differences") {
  auto graph = toy_graph(5);
  auto cfg = tiny_config();
  auto m = toy_model(cfg, graph, 4, 20, 9);
  const auto in = random_input(20, 5, 55, /*two_bodies=*/true);

  SampleCache cache;
  const auto z = forward_features(in, m, &cache);
  Tensor dz(z.values.shape());
  dz.fill(1.0);
  GradBuffer grads(m.params);
  grads.zero();
  backbone_backward(dz, cache, m, grads);

  // Relative error floored by the gradient scale: conv bias entries feeding
  // a channel norm have an exactly-zero derivative, where central
  // differences return nothing but rounding noise.
  double scale = 0.0;
  for (const auto& g : grads.grads)
    for (std::int64_t i = 0; i < g.size(); ++i) scale = std::max(scale, std::abs(g[i]));
  REQUIRE(scale > 0.0);

  auto rng = rng_stream(14, "pick_entries");
  const double h = 1e-5;
  int checked = 0;
  double max_rel = 0.0;
  while (checked < 64) {
    const std::size_t pi = static_cast<std::size_t>(uniform_index(rng, m.params.size()));
    Tensor& value = m.params[pi].value;
    const std::int64_t ei = static_cast<std::int64_t>(
        uniform_index(rng, static_cast<std::uint64_t>(value.size())));
    const double saved = value[ei];
    value[ei] = saved + h;
    const double up = forward_sum(m, in);
    value[ei] = saved - h;
    const double down = forward_sum(m, in);
    value[ei] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grads.grads[pi][ei];
    const double rel = std::abs(numeric - analytic) /
                       std::max({1e-4 * scale, std::abs(numeric), std::abs(analytic)});
    max_rel = std::max(max_rel, rel);
    ++checked;
  }
  INFO("max relative error = " << max_rel);
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("spatial graph convolution is permutation equivariant") {
  const int V = 5;
  const auto graph = toy_graph(V);
  const auto adj = normalized_adjacency(graph, "spatial");
  const int C_in = 3, C_out = 4, T = 6;

  auto rng = rng_stream(71, "perm_test");
  Tensor w({adj.K, C_out, C_in});
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = gaussian(rng);
  Tensor b({C_out});
  Tensor mask({adj.K, V, V});
  mask.fill(1.0);
  Tensor x({C_in, T, V});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = gaussian(rng);

  const std::vector<int> perm = {3, 0, 4, 1, 2};  // new index of each joint
  std::vector<Tensor> adj_p(static_cast<std::size_t>(adj.K), Tensor({V, V}));
  for (int k = 0; k < adj.K; ++k)
    for (int i = 0; i < V; ++i)
      for (int j = 0; j < V; ++j)
        adj_p[static_cast<std::size_t>(k)].at2(perm[static_cast<std::size_t>(i)],
                                               perm[static_cast<std::size_t>(j)]) =
            adj.mats[static_cast<std::size_t>(k)].at2(i, j);
  Tensor x_p({C_in, T, V});
  for (int c = 0; c < C_in; ++c)
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v)
        x_p.at3(c, t, perm[static_cast<std::size_t>(v)]) = x.at3(c, t, v);

  const Tensor y = spatial_conv_forward(x, w, b, adj.mats, mask, nullptr);
  const Tensor y_p = spatial_conv_forward(x_p, w, b, adj_p, mask, nullptr);
  for (int c = 0; c < C_out; ++c)
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v)
        CHECK(y_p.at3(c, t, perm[static_cast<std::size_t>(v)]) ==
              Catch::Approx(y.at3(c, t, v)).margin(1e-12));
}

TEST_CASE("checkpoints round-trip and refuse mismatched configs") {
  namespace fs = std::filesystem;
  const auto cfg = BackboneConfig::fast_profile();
  const auto m = make_model(cfg, "coco17", 6, 60, 77);
  const auto path = (fs::temp_directory_path() / "partkd_ckpt.bin").string();
  save_checkpoint(to_checkpoint(m), path);

  const auto loaded = load_checkpoint(path, &cfg);
  CHECK(loaded.schema_id == "coco17");
  CHECK(loaded.num_actions == 6);
  CHECK(loaded.frames == 60);
  REQUIRE(loaded.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i)
    for (std::int64_t j = 0; j < m.params[i].value.size(); ++j)
      CHECK(loaded.params[i].value[j] == m.params[i].value[j]);

  BackboneConfig other = cfg;
  other.channel_plan.back() = 32;
  CHECK_THROWS_AS(load_checkpoint(path, &other), ConfigError);
  fs::remove(path);
}
