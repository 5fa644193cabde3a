// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pixelflow/dataflow_sim.hpp"
#include "pixelflow/io/image.hpp"
#include "pixelflow/io/model_json.hpp"
#include "pixelflow/io/reports.hpp"
#include "pixelflow/io/weights.hpp"
#include "pixelflow/reference.hpp"

using namespace pixelflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pixelflow_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("ppm round trip preserves pixels") {
  TempDir tmp;
  io::RawImage img;
  img.channels = 3;
  img.height = 5;
  img.width = 4;
  img.data.resize(60);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = std::uint8_t(i * 4);
  io::write_ppm(tmp.path / "x.ppm", img);
  const auto back = io::read_ppm(tmp.path / "x.ppm");
  CHECK(back.height == 5);
  CHECK(back.width == 4);
  CHECK(back.data == img.data);
}

TEST_CASE("ppm reader accepts comments in the header") {
  TempDir tmp;
  std::ofstream out(tmp.path / "c.ppm", std::ios::binary);
  out << "P6\n# a comment\n2 1\n# another\n255\n";
  const char px[6] = {1, 2, 3, 4, 5, 6};
  out.write(px, 6);
  out.close();
  const auto img = io::read_ppm(tmp.path / "c.ppm");
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.at(0, 0, 0) == 1);
  CHECK(img.at(2, 0, 1) == 6);
}

TEST_CASE("pgm round trip preserves labels") {
  TempDir tmp;
  metrics::LabelMap map(3, 4);
  for (std::size_t i = 0; i < map.labels.size(); ++i) map.labels[i] = std::uint8_t(i % 4);
  io::write_pgm(tmp.path / "l.pgm", map);
  CHECK(io::read_pgm(tmp.path / "l.pgm") == map);
}

TEST_CASE("raw binary images need a sidecar and matching payload") {
  TempDir tmp;
  std::ofstream(tmp.path / "t.json") << R"({"shape": [1, 2, 2], "dtype": "uint8"})";
  std::ofstream bin(tmp.path / "t.bin", std::ios::binary);
  const char px[4] = {9, 8, 7, 6};
  bin.write(px, 4);
  bin.close();
  const auto img = io::load_image(tmp.path / "t.bin");
  CHECK(img.channels == 1);
  CHECK(img.at(0, 1, 1) == 6);

  std::ofstream(tmp.path / "bad.json") << R"({"shape": [1, 4, 4], "dtype": "uint8"})";
  fs::copy(tmp.path / "t.bin", tmp.path / "bad.bin");
  CHECK_THROWS(io::load_image(tmp.path / "bad.bin"));
  CHECK_THROWS(io::load_image(tmp.path / "missing.ppm"));
}

TEST_CASE("preprocess maps v to v/256 exactly in u8.0") {
  io::RawImage img;
  img.channels = 1;
  img.height = 1;
  img.width = 3;
  img.data = {0, 128, 255};
  const auto t = io::preprocess(img, fx::FxFormat::parse("u8.0"));
  CHECK(t.data[0] == 0);
  CHECK(t.data[1] == 128);
  CHECK(t.data[2] == 255);
  CHECK(t.value_at(0, 0, 2) == 0.99609375);  // 255/256
  // Every preprocessed value is < 1 and exactly representable in 8 bits.
  for (int v = 0; v < 256; ++v) {
    io::RawImage one;
    one.channels = 1;
    one.height = 1;
    one.width = 1;
    one.data = {std::uint8_t(v)};
    const auto q = io::preprocess(one, fx::FxFormat::parse("u8.0"));
    CHECK(q.data[0] == v);
    CHECK(q.value_at(0, 0, 0) < 1.0);
    CHECK(q.value_at(0, 0, 0) == double(v) / 256.0);
  }
}

TEST_CASE("weights bundle round trip with overlap validation") {
  TempDir tmp;
  io::WeightsBundle bundle;
  io::Blob w;
  w.shape = {2, 1, 1, 1};
  w.data = {0.5f, -0.25f};
  bundle.blobs["conv.w"] = w;
  io::Blob b;
  b.shape = {2};
  b.data = {0.f, 0.125f};
  bundle.blobs["conv.b"] = b;
  io::save_weights(tmp.path / "w.json", bundle);

  const auto back = io::load_weights(tmp.path / "w.json");
  CHECK(back.get("conv.w").data == w.data);
  CHECK(back.get("conv.b").shape == b.shape);
  CHECK_THROWS(back.get("missing"));

  // Corrupt the manifest so two blobs overlap.
  std::ifstream in(tmp.path / "w.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.rfind("\"offset\": 8");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 11, "\"offset\": 2");
  std::ofstream(tmp.path / "w.json") << text;
  CHECK_THROWS(io::load_weights(tmp.path / "w.json"));
}

TEST_CASE("attach_weights binds blobs and folds batchnorm") {
  ir::ModelGraph g;
  g.input_shape = {1, 4, 4};
  g.input_format = fx::FxFormat::parse("u8.0");
  const int in = g.add_node({"input", ir::LayerKind::Input, {}, ""}, {});
  ir::ConvBNParams conv;
  conv.kernel = 1;
  conv.filters = 1;
  conv.weight_format = fx::FxFormat::parse("s8.2");
  conv.out_format = fx::FxFormat::parse("s8.2");
  const int c = g.add_node({"conv", ir::LayerKind::ConvBN, conv, ""}, {in});
  g.add_node({"output", ir::LayerKind::Output, {}, ""}, {c});

  io::WeightsBundle bundle;
  bundle.blobs["conv.w"] = {{1, 1, 1, 1}, {1.0f}};
  bundle.blobs["conv.b"] = {{1}, {0.5f}};
  bundle.blobs["conv.bn.gamma"] = {{1}, {2.0f}};
  bundle.blobs["conv.bn.beta"] = {{1}, {0.25f}};
  bundle.blobs["conv.bn.mean"] = {{1}, {0.0f}};
  bundle.blobs["conv.bn.variance"] = {{1}, {1.0f}};
  io::attach_weights(g, bundle, {{"conv", 0.0f}});

  const auto& p = g.nodes[c].conv();
  CHECK(p.weights[0] == doctest::Approx(2.0f));
  CHECK(p.bias[0] == doctest::Approx(1.25f));

  io::WeightsBundle wrong;
  wrong.blobs["conv.w"] = {{2, 1, 1, 1}, {1.f, 2.f}};
  CHECK_THROWS(io::attach_weights(g, wrong));
}

TEST_CASE("builder model json round trips through load_model") {
  TempDir tmp;
  ir::QuantConfig quant;
  quant.stage_overrides[1] = ir::StageFormats{fx::FxFormat::parse("s4.0"),
                                              fx::FxFormat::parse("u4.0")};
  io::save_builder_model(tmp.path / "m.json", "tiny", {2, 2, 2, 2, 2, 2}, {3, 16, 16},
                         quant, 4, "w.json");
  auto model = io::load_model(tmp.path / "m.json");
  CHECK(model.graph.name == "tiny");
  CHECK(model.graph.input_shape == ir::Shape{3, 16, 16});
  CHECK(model.weights_manifest == tmp.path / "w.json");
  REQUIRE(ir::validate(model.graph).empty());
  // The bottleneck1 override must land on its convolutions.
  const int node = model.graph.find_node("b1.0.conv_main");
  REQUIRE(node >= 0);
  CHECK(model.graph.nodes[node].conv().weight_format.to_string() == "s4.0");
  const int other = model.graph.find_node("b2.0.conv_main");
  REQUIRE(other >= 0);
  CHECK(model.graph.nodes[other].conv().weight_format.to_string() == "s8.0");
}

TEST_CASE("explicit model json builds the described graph") {
  TempDir tmp;
  std::ofstream(tmp.path / "m.json") << R"({
    "name": "micro",
    "input_shape": [1, 4, 4],
    "input_format": "u8.0",
    "rounding": "truncate",
    "overflow": "wrap",
    "nodes": [
      {"name": "input", "kind": "Input"},
      {"name": "conv", "kind": "ConvBN", "kernel": 3, "filters": 2,
       "weight_format": "s8.0", "out_format": "u8.0"},
      {"name": "relu", "kind": "Relu"},
      {"name": "output", "kind": "Output"}
    ],
    "edges": [["input", "conv"], ["conv", "relu"], ["relu", "output"]]
  })";
  auto model = io::load_model(tmp.path / "m.json");
  REQUIRE(ir::validate(model.graph).empty());
  CHECK(model.graph.nodes.size() == 4);
  const auto& conv = model.graph.nodes[model.graph.find_node("conv")].conv();
  CHECK(conv.kernel == 3);
  CHECK(conv.weight_format.rounding == fx::Rounding::Truncate);
  CHECK(conv.weight_format.overflow == fx::Overflow::Wrap);
  CHECK(model.weights_manifest.empty());
}

TEST_CASE("model json rejects malformed input") {
  TempDir tmp;
  std::ofstream(tmp.path / "bad.json") << R"({"name": "x"})";
  CHECK_THROWS(io::load_model(tmp.path / "bad.json"));
  std::ofstream(tmp.path / "bad2.json") << "not json";
  CHECK_THROWS(io::load_model(tmp.path / "bad2.json"));
  std::ofstream(tmp.path / "bad3.json")
      << R"({"builder": {"filters": [1, 2]}})";
  CHECK_THROWS(io::load_model(tmp.path / "bad3.json"));
}

TEST_CASE("occupancy csv has the contract columns") {
  std::vector<sim::EdgeTrace> traces(2);
  traces[0] = {0, "a", "b", 16, 3, 1.25};
  traces[1] = {1, "b", "c", 8, 8, 7.5};
  const auto csv = io::occupancy_csv(traces);
  CHECK(csv.find("edge_id,producer,consumer,capacity,max_occupancy,mean_occupancy") == 0);
  CHECK(csv.find("0,a,b,16,3,1.250000") != std::string::npos);
  CHECK(csv.find("1,b,c,8,8,7.500000") != std::string::npos);

  const auto summary = io::summarize_occupancy(traces);
  CHECK(summary.memory_efficiency == doctest::Approx(11.0 / 24.0));
  CHECK(summary.mean_occupancy == doctest::Approx((3.0 / 16.0 + 1.0) / 2.0));
}

TEST_CASE("depth map json round trips against the graph") {
  TempDir tmp;
  auto g = ir::build_enet({2, 2, 2, 2, 2, 2}, {3, 16, 16});
  const auto depths = sim::baseline_depths(g);
  const auto json_text = io::depth_map_json(g, depths);
  std::ofstream(tmp.path / "d.json") << json_text;
  const auto back = io::load_depth_map(g, tmp.path / "d.json");
  CHECK(back == depths);

  std::ofstream(tmp.path / "partial.json") << R"({"edges": {"input->initial.conv": 4}})";
  CHECK_THROWS(io::load_depth_map(g, tmp.path / "partial.json"));
}

TEST_CASE("quantization error bound holds on a shallow model") {
  ir::ModelGraph g;
  g.input_shape = {1, 6, 6};
  g.input_format = fx::FxFormat::parse("u8.0");
  const int in = g.add_node({"input", ir::LayerKind::Input, {}, ""}, {});
  ir::ConvBNParams conv;
  conv.kernel = 3;
  conv.filters = 2;
  conv.weight_format = fx::FxFormat::parse("s8.0");
  conv.out_format = fx::FxFormat::parse("u8.2");
  std::mt19937_64 rng(163);
  conv.weights.resize(18);
  for (auto& v : conv.weights) {
    v = float((double(rng() % 2001) - 1000.0) / 4000.0);  // |w| <= 0.25
  }
  conv.bias = {0.05f, -0.05f};
  const int c = g.add_node({"conv", ir::LayerKind::ConvBN, conv, ""}, {in});
  const int r = g.add_node({"relu", ir::LayerKind::Relu, {}, ""}, {c});
  g.add_node({"output", ir::LayerKind::Output, {}, ""}, {r});
  REQUIRE(ir::validate(g, true).empty());

  const double bound = ref::quantization_error_bound(g);
  CHECK(bound > 0.0);

  fx::FxTensor img(1, 6, 6, g.input_format);
  for (auto& v : img.data) v = std::int32_t(rng() % 256);
  const auto fixed = ref::run_fixed(g, img);
  ref::FloatTensor fimg{{1, 6, 6}, {}};
  fimg.data.resize(36);
  for (int i = 0; i < 36; ++i) fimg.data[i] = float(img.data[i] / 256.0);
  const auto fl = ref::run_float(g, fimg);
  for (std::size_t i = 0; i < fl.data.size(); ++i) {
    const double fixed_v = std::ldexp(double(fixed.data[i]), -fixed.format.frac_bits());
    CHECK(std::abs(fixed_v - double(fl.data[i])) <= bound);
  }
}
