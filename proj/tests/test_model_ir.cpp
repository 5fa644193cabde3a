// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "pixelflow/enet.hpp"
#include "pixelflow/model_ir.hpp"
#include "pixelflow/reference.hpp"

using namespace pixelflow;

namespace {

ir::ModelGraph tiny_passthrough() {
  ir::ModelGraph g;
  g.input_shape = {1, 4, 4};
  g.input_format = fx::FxFormat::parse("u8.0");
  const int in = g.add_node({"input", ir::LayerKind::Input, {}, ""}, {});
  const int relu = g.add_node({"relu", ir::LayerKind::Relu, {}, ""}, {in});
  g.add_node({"output", ir::LayerKind::Output, {}, ""}, {relu});
  return g;
}

}  // namespace

TEST_CASE("full-size network hits the expected per-stage resolutions") {
  auto g = ir::build_enet({32, 64, 64, 64, 128, 48});
  const auto stages = ir::stage_table(g);
  REQUIRE(stages.size() == 7);
  CHECK(stages[0].output == ir::Shape{32, 120, 76});
  CHECK(stages[1].output == ir::Shape{64, 60, 38});
  CHECK(stages[2].output == ir::Shape{64, 30, 19});
  CHECK(stages[3].output == ir::Shape{64, 30, 19});
  CHECK(stages[4].output == ir::Shape{128, 60, 38});
  CHECK(stages[5].output == ir::Shape{48, 120, 76});
  CHECK(stages[6].output == ir::Shape{4, 240, 152});
  CHECK(stages[0].kind == "downsample");
  CHECK(stages[3].kind == "");
  CHECK(stages[6].kind == "upsample");
}

TEST_CASE("parameter counts land within 25% of the family targets") {
  const auto check_params = [](const ir::EnetFilters& f, double expected) {
    auto g = ir::build_enet(f);
    const auto params = double(ir::parameter_count(g));
    CHECK(params >= expected * 0.75);
    CHECK(params <= expected * 1.25);
  };
  check_params({32, 64, 64, 64, 128, 48}, 1.1e6);
  check_params({32, 16, 16, 16, 16, 16}, 5e4);
  check_params({32, 12, 12, 12, 12, 12}, 3e4);
  check_params({32, 8, 8, 8, 8, 8}, 1.4e4);
  check_params({32, 6, 6, 6, 6, 6}, 9e3);
  check_params({32, 4, 4, 4, 4, 4}, 5e3);
}

TEST_CASE("heterogeneous filter configuration builds a valid graph") {
  auto g = ir::build_enet({8, 2, 4, 8, 4, 3});
  CHECK(ir::validate(g).empty());
  const auto stages = ir::stage_table(g);
  CHECK(stages[6].output == ir::Shape{4, 240, 152});
}

TEST_CASE("builder rejects bad inputs") {
  CHECK_THROWS_AS(ir::build_enet({0, 8, 8, 8, 8, 8}), std::invalid_argument);
  CHECK_THROWS_AS(ir::build_enet({32, 8, 8, 8, 8, 8}, {3, 100, 152}),
                  std::invalid_argument);  // height not divisible by 8
  CHECK_THROWS_AS(ir::build_enet({32, 8, 8, 8, 8, 8}, {3, 240, 150}),
                  std::invalid_argument);
}

TEST_CASE("single conv parameter count follows the closed form") {
  ir::ModelGraph g;
  g.input_shape = {3, 8, 8};
  g.input_format = fx::FxFormat::parse("u8.0");
  const int in = g.add_node({"input", ir::LayerKind::Input, {}, ""}, {});
  ir::ConvBNParams conv;
  conv.kernel = 3;
  conv.filters = 8;
  conv.weight_format = fx::FxFormat::parse("s8.0");
  conv.out_format = fx::FxFormat::parse("u8.0");
  const int c = g.add_node({"conv", ir::LayerKind::ConvBN, conv, ""}, {in});
  g.add_node({"output", ir::LayerKind::Output, {}, ""}, {c});
  CHECK(ir::parameter_count(g) == 3 * 3 * 3 * 8 + 8);

  auto p = tiny_passthrough();
  CHECK(ir::parameter_count(p) == 0);
}

TEST_CASE("every Add in a built graph has matching operand shapes") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    ir::EnetFilters f;
    for (auto& v : f) v = 1 + int(rng() % 12);
    auto g = ir::build_enet(f, {3, 16, 16});
    REQUIRE(ir::validate(g).empty());
    for (int n = 0; n < int(g.nodes.size()); ++n) {
      if (g.nodes[n].kind != ir::LayerKind::Add) continue;
      const auto ins = g.input_edges(n);
      const auto a = g.shape_of(g.edges[ins[0]].from);
      const auto b = g.shape_of(g.edges[ins[1]].from);
      CHECK(a == b);
    }
  }
}

TEST_CASE("validate flags mismatched Add operands with the node id") {
  ir::ModelGraph g;
  g.input_shape = {2, 4, 4};
  g.input_format = fx::FxFormat::parse("u8.0");
  const int in = g.add_node({"input", ir::LayerKind::Input, {}, ""}, {});
  const int pad = g.add_node({"pad", ir::LayerKind::ChannelPad, ir::ChannelPadParams{5}, ""},
                             {in});
  const int add = g.add_node({"bad_add", ir::LayerKind::Add, {}, ""}, {in, pad});
  g.add_node({"output", ir::LayerKind::Output, {}, ""}, {add});
  const auto diags = ir::validate(g);
  REQUIRE(!diags.empty());
  bool found = false;
  for (const auto& d : diags) {
    if (d.node == add && d.message.find("Add operand shapes differ") != std::string::npos) {
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("validate flags cycles") {
  auto g = tiny_passthrough();
  // Edge from output back into relu introduces a cycle (and a port clash,
  // both diagnosable; the cycle must be reported).
  g.edges.push_back(ir::Edge{2, 1, 1});
  const auto diags = ir::validate(g);
  REQUIRE(!diags.empty());
}

TEST_CASE("validate flags missing weights only when required") {
  auto g = ir::build_enet({4, 2, 2, 2, 2, 2}, {3, 16, 16});
  CHECK(ir::validate(g).empty());
  const auto diags = ir::validate(g, true);
  CHECK(!diags.empty());
  ir::attach_random_weights(g, 99);
  CHECK(ir::validate(g, true).empty());
}

TEST_CASE("validate flags dangling nodes and duplicate names") {
  auto g = tiny_passthrough();
  g.add_node({"orphan", ir::LayerKind::Relu, {}, ""}, {0});
  auto diags = ir::validate(g);
  bool dangling = false;
  for (const auto& d : diags) {
    if (d.message.find("feeds nothing") != std::string::npos) dangling = true;
  }
  CHECK(dangling);

  auto g2 = tiny_passthrough();
  g2.nodes[1].name = "input";
  diags = ir::validate(g2);
  bool dup = false;
  for (const auto& d : diags) {
    if (d.message.find("duplicate node name") != std::string::npos) dup = true;
  }
  CHECK(dup);
}

TEST_CASE("shape algebra follows the layer rules") {
  auto g = ir::build_enet({4, 2, 2, 2, 2, 2}, {3, 16, 16});
  REQUIRE(ir::validate(g).empty());
  for (int n = 0; n < int(g.nodes.size()); ++n) {
    const auto& spec = g.nodes[n];
    const auto ins = g.input_edges(n);
    if (ins.empty()) continue;
    const ir::Shape in = g.shape_of(g.edges[ins[0]].from);
    const ir::Shape out = g.shape_of(n);
    switch (spec.kind) {
      case ir::LayerKind::MaxPool:
        CHECK(out.height == in.height / 2);
        CHECK(out.width == in.width / 2);
        break;
      case ir::LayerKind::Upsample:
        CHECK(out.height == in.height * 2);
        CHECK(out.width == in.width * 2);
        break;
      case ir::LayerKind::ConvBN:
        CHECK(out.height == in.height);  // same padding preserves H,W
        CHECK(out.width == in.width);
        break;
      default:
        break;
    }
  }
}

TEST_CASE("batchnorm folding: identity and pure scale") {
  std::vector<float> w{1.f, 2.f, 3.f, 4.f};
  std::vector<float> b{0.5f, -0.5f};
  ir::BnParams bn;
  bn.gamma = {1.f, 1.f};
  bn.beta = {0.f, 0.f};
  bn.moving_mean = {0.f, 0.f};
  bn.moving_variance = {1.f, 1.f};
  bn.epsilon = 0.f;
  auto w1 = w;
  auto b1 = b;
  ir::fold_batchnorm(w1, b1, 2, bn);
  CHECK(w1 == w);
  CHECK(b1 == b);

  bn.gamma = {2.f, 2.f};
  auto w2 = w;
  auto b2 = b;
  ir::fold_batchnorm(w2, b2, 2, bn);
  CHECK(w2 == std::vector<float>{2.f, 4.f, 6.f, 8.f});
  CHECK(b2 == std::vector<float>{1.f, -1.f});
}

TEST_CASE("batchnorm folding matches the float composition oracle") {
  std::mt19937_64 rng(23);
  const auto uniform = [&](double lo, double hi) {
    return float(lo + (hi - lo) * double(rng() >> 11) / double(std::uint64_t{1} << 53));
  };
  for (int trial = 0; trial < 20; ++trial) {
    const int filters = 1 + int(rng() % 5);
    const int c_in = 1 + int(rng() % 4);
    const int k = 1 + 2 * int(rng() % 2);
    const int h = 5, w = 6;

    std::vector<float> weights(std::size_t(filters) * c_in * k * k);
    std::vector<float> bias(filters);
    for (auto& v : weights) v = uniform(-1.0, 1.0);
    for (auto& v : bias) v = uniform(-0.5, 0.5);
    ir::BnParams bn;
    for (int f = 0; f < filters; ++f) {
      bn.gamma.push_back(uniform(0.2, 2.0));
      bn.beta.push_back(uniform(-1.0, 1.0));
      bn.moving_mean.push_back(uniform(-1.0, 1.0));
      bn.moving_variance.push_back(uniform(0.05, 2.0));
    }
    bn.epsilon = 1e-3f;

    ref::FloatTensor img{{c_in, h, w}, {}};
    img.data.resize(std::size_t(c_in) * h * w);
    for (auto& v : img.data) v = uniform(0.0, 1.0);

    // conv(x) then BN, via an explicit float conv.
    ir::ConvBNParams raw;
    raw.kernel = k;
    raw.filters = filters;
    raw.weights = weights;
    raw.bias = bias;
    raw.weight_format = fx::FxFormat::parse("s8.0");
    raw.out_format = fx::FxFormat::parse("s8.0");
    ir::ModelGraph g;
    g.input_shape = {c_in, h, w};
    g.input_format = fx::FxFormat::parse("u8.0");
    const int in = g.add_node({"input", ir::LayerKind::Input, {}, ""}, {});
    const int conv = g.add_node({"conv", ir::LayerKind::ConvBN, raw, ""}, {in});
    g.add_node({"output", ir::LayerKind::Output, {}, ""}, {conv});
    REQUIRE(ir::validate(g, true).empty());
    const auto pre_bn = ref::run_float(g, img);

    auto folded_w = weights;
    auto folded_b = bias;
    ir::fold_batchnorm(folded_w, folded_b, filters, bn);
    g.nodes[conv].conv().weights = folded_w;
    g.nodes[conv].conv().bias = folded_b;
    g.inferred = false;
    REQUIRE(ir::validate(g, true).empty());
    const auto folded_out = ref::run_float(g, img);

    for (std::size_t i = 0; i < folded_out.data.size(); ++i) {
      const int f = int(i / (std::size_t(h) * w));
      const double scale = bn.gamma[f] / std::sqrt(double(bn.moving_variance[f]) + 1e-3);
      const double expect = (double(pre_bn.data[i]) - bn.moving_mean[f]) * scale + bn.beta[f];
      CHECK(std::abs(folded_out.data[i] - expect) <=
            1e-6 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("folding is linear in weights and bias") {
  ir::BnParams bn;
  bn.gamma = {1.5f};
  bn.beta = {0.25f};
  bn.moving_mean = {0.1f};
  bn.moving_variance = {0.9f};
  bn.epsilon = 1e-3f;

  std::vector<float> w1{0.3f, -0.2f}, b1{0.1f};
  std::vector<float> w2{-0.5f, 0.4f}, b2{-0.3f};
  // fold(w1 + w2) - fold(0) == (fold(w1) - fold(0)) + (fold(w2) - fold(0))
  auto sum_w = std::vector<float>{w1[0] + w2[0], w1[1] + w2[1]};
  auto sum_b = std::vector<float>{b1[0] + b2[0]};
  ir::fold_batchnorm(sum_w, sum_b, 1, bn);
  auto z_w = std::vector<float>{0.f, 0.f};
  auto z_b = std::vector<float>{0.f};
  ir::fold_batchnorm(z_w, z_b, 1, bn);
  auto f1_w = w1;
  auto f1_b = b1;
  ir::fold_batchnorm(f1_w, f1_b, 1, bn);
  auto f2_w = w2;
  auto f2_b = b2;
  ir::fold_batchnorm(f2_w, f2_b, 1, bn);
  for (int i = 0; i < 2; ++i) {
    CHECK(sum_w[i] - z_w[i] == doctest::Approx(f1_w[i] - z_w[i] + f2_w[i] - z_w[i]));
  }
  CHECK(sum_b[0] - z_b[0] == doctest::Approx(f1_b[0] - z_b[0] + f2_b[0] - z_b[0]));
}

TEST_CASE("folding rejects non-positive variance") {
  std::vector<float> w{1.f};
  std::vector<float> b{0.f};
  ir::BnParams bn;
  bn.gamma = {1.f};
  bn.beta = {0.f};
  bn.moving_mean = {0.f};
  bn.moving_variance = {-2e-3f};
  bn.epsilon = 1e-3f;
  CHECK_THROWS_AS(ir::fold_batchnorm(w, b, 1, bn), std::invalid_argument);
}
