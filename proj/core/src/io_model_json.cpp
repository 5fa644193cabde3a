// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/io/model_json.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace pixelflow::io {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

fx::Rounding parse_rounding(const std::string& s, const std::filesystem::path& path) {
  if (s == "round_nearest_even") return fx::Rounding::RoundNearestEven;
  if (s == "truncate") return fx::Rounding::Truncate;
  fail(path, "unknown rounding '" + s + "'");
}

fx::Overflow parse_overflow(const std::string& s, const std::filesystem::path& path) {
  if (s == "saturate") return fx::Overflow::Saturate;
  if (s == "wrap") return fx::Overflow::Wrap;
  fail(path, "unknown overflow '" + s + "'");
}

ir::Shape parse_shape(const json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 3) throw std::runtime_error("shape must be [channels, height, width]");
  return {v[0], v[1], v[2]};
}

const std::array<std::string, 7> kStageNames = {
    "initial",     "bottleneck1", "bottleneck2", "bottleneck3",
    "bottleneck4", "bottleneck5", "final"};

ir::QuantConfig parse_quant(const json& q, fx::Rounding rounding, fx::Overflow overflow,
                            const std::filesystem::path& path) {
  ir::QuantConfig cfg;
  const auto fmt = [&](const json& v) {
    return fx::FxFormat::parse(v.get<std::string>(), rounding, overflow);
  };
  if (q.contains("weights")) cfg.base.weights = fmt(q.at("weights"));
  if (q.contains("activations")) cfg.base.activations = fmt(q.at("activations"));
  if (q.contains("input")) cfg.input = fmt(q.at("input"));
  if (q.contains("logits")) cfg.logits = fmt(q.at("logits"));
  if (q.contains("stages")) {
    for (const auto& [stage, desc] : q.at("stages").items()) {
      const auto it = std::find(kStageNames.begin(), kStageNames.end(), stage);
      if (it == kStageNames.end()) fail(path, "unknown quant stage '" + stage + "'");
      const auto idx = std::size_t(it - kStageNames.begin());
      ir::StageFormats sf = cfg.base;
      if (desc.contains("weights")) sf.weights = fmt(desc.at("weights"));
      if (desc.contains("activations")) sf.activations = fmt(desc.at("activations"));
      cfg.stage_overrides[idx] = sf;
    }
  }
  cfg.set_policies(rounding, overflow);
  return cfg;
}

ir::LayerKind parse_kind(const std::string& s, const std::filesystem::path& path) {
  for (const auto kind :
       {ir::LayerKind::Input, ir::LayerKind::Output, ir::LayerKind::ConvBN,
        ir::LayerKind::MaxPool, ir::LayerKind::Upsample, ir::LayerKind::SpatialPad,
        ir::LayerKind::ChannelPad, ir::LayerKind::Relu, ir::LayerKind::Add}) {
    if (s == ir::kind_name(kind)) return kind;
  }
  fail(path, "unknown layer kind '" + s + "'");
}

ir::ModelGraph load_explicit(const json& j, fx::Rounding rounding, fx::Overflow overflow,
                             const std::filesystem::path& path,
                             std::map<std::string, float>& bn_epsilons) {
  ir::ModelGraph g;
  std::map<std::string, int> ids;
  for (const auto& nj : j.at("nodes")) {
    ir::LayerSpec spec;
    spec.name = nj.at("name").get<std::string>();
    spec.kind = parse_kind(nj.at("kind").get<std::string>(), path);
    switch (spec.kind) {
      case ir::LayerKind::ConvBN: {
        ir::ConvBNParams p;
        p.kernel = nj.value("kernel", 3);
        p.filters = nj.at("filters").get<int>();
        p.padding = nj.value("padding", "same") == "valid" ? ir::PaddingMode::Valid
                                                           : ir::PaddingMode::Same;
        p.weight_format =
            fx::FxFormat::parse(nj.at("weight_format").get<std::string>(), rounding, overflow);
        p.out_format =
            fx::FxFormat::parse(nj.at("out_format").get<std::string>(), rounding, overflow);
        if (nj.contains("bn_epsilon")) {
          bn_epsilons[spec.name] = nj.at("bn_epsilon").get<float>();
        }
        spec.params = std::move(p);
        break;
      }
      case ir::LayerKind::MaxPool:
        spec.params = ir::MaxPoolParams{nj.value("kernel", 2)};
        break;
      case ir::LayerKind::Upsample:
        spec.params = ir::UpsampleParams{nj.value("kernel", 2)};
        break;
      case ir::LayerKind::SpatialPad:
        spec.params = ir::SpatialPadParams{nj.at("pad").get<int>()};
        break;
      case ir::LayerKind::ChannelPad:
        spec.params = ir::ChannelPadParams{nj.at("target_channels").get<int>()};
        break;
      default:
        break;
    }
    if (ids.count(spec.name)) fail(path, "duplicate node name '" + spec.name + "'");
    ids[spec.name] = int(g.nodes.size());
    g.nodes.push_back(std::move(spec));
  }
  std::map<int, int> next_port;
  for (const auto& ej : j.at("edges")) {
    const auto pair = ej.get<std::vector<std::string>>();
    if (pair.size() != 2) fail(path, "edges must be [from, to] name pairs");
    const auto from = ids.find(pair[0]);
    const auto to = ids.find(pair[1]);
    if (from == ids.end()) fail(path, "edge references unknown node '" + pair[0] + "'");
    if (to == ids.end()) fail(path, "edge references unknown node '" + pair[1] + "'");
    g.edges.push_back(ir::Edge{from->second, to->second, next_port[to->second]++});
  }
  return g;
}

}  // namespace

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(path, std::string("bad JSON: ") + e.what());
  }

  const auto rounding = parse_rounding(j.value("rounding", "round_nearest_even"), path);
  const auto overflow = parse_overflow(j.value("overflow", "saturate"), path);

  LoadedModel model;
  try {
    if (j.contains("builder")) {
      const json& b = j.at("builder");
      const auto filters_vec = b.at("filters").get<std::vector<int>>();
      if (filters_vec.size() != 6) fail(path, "builder.filters must list f0..f5");
      ir::EnetFilters filters;
      std::copy(filters_vec.begin(), filters_vec.end(), filters.begin());
      ir::Shape input_shape{3, 240, 152};
      if (j.contains("input_shape")) input_shape = parse_shape(j.at("input_shape"));
      ir::QuantConfig quant =
          parse_quant(b.value("quant", json::object()), rounding, overflow, path);
      model.graph =
          ir::build_enet(filters, input_shape, quant, b.value("n_classes", 4));
    } else if (j.contains("nodes")) {
      model.graph = load_explicit(j, rounding, overflow, path, model.bn_epsilons);
      if (j.contains("input_shape")) model.graph.input_shape = parse_shape(j.at("input_shape"));
      model.graph.input_format = fx::FxFormat::parse(
          j.value("input_format", "u8.0"), rounding, overflow);
    } else {
      fail(path, "model must contain either 'builder' or 'nodes'");
    }
  } catch (const std::runtime_error&) {
    throw;
  } catch (const std::exception& e) {
    fail(path, e.what());
  }

  model.graph.name = j.value("name", path.stem().string());
  if (j.contains("weights")) {
    model.weights_manifest = path.parent_path() / j.at("weights").get<std::string>();
  }
  return model;
}

void save_builder_model(const std::filesystem::path& path, const std::string& name,
                        const ir::EnetFilters& filters, const ir::Shape& input_shape,
                        const ir::QuantConfig& quant, int n_classes,
                        const std::string& weights_manifest) {
  json q = {{"weights", quant.base.weights.to_string()},
            {"activations", quant.base.activations.to_string()},
            {"input", quant.input.to_string()},
            {"logits", quant.logits_format().to_string()}};
  json stages = json::object();
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (quant.stage_overrides[i]) {
      stages[kStageNames[i]] = {
          {"weights", quant.stage_overrides[i]->weights.to_string()},
          {"activations", quant.stage_overrides[i]->activations.to_string()}};
    }
  }
  if (!stages.empty()) q["stages"] = stages;

  const bool truncate = quant.base.weights.rounding == fx::Rounding::Truncate;
  const bool wrap = quant.base.weights.overflow == fx::Overflow::Wrap;
  json j = {
      {"name", name},
      {"input_shape", {input_shape.channels, input_shape.height, input_shape.width}},
      {"rounding", truncate ? "truncate" : "round_nearest_even"},
      {"overflow", wrap ? "wrap" : "saturate"},
      {"builder",
       {{"filters", std::vector<int>(filters.begin(), filters.end())},
        {"n_classes", n_classes},
        {"quant", q}}},
  };
  if (!weights_manifest.empty()) j["weights"] = weights_manifest;
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");
  out << j.dump(2) << "\n";
}

}  // namespace pixelflow::io
