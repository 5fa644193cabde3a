// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/enet.hpp"

#include <map>

namespace pixelflow::ir {

fx::FxFormat QuantConfig::logits_format() const {
  if (logits) return *logits;
  fx::FxFormat fmt = stage(kStages - 1).activations;
  if (fmt.is_signed) return fmt;
  fmt.is_signed = true;
  if (fmt.frac_bits() < 0) fmt.integer_bits = fmt.total_bits - 1;
  return fmt;
}

void QuantConfig::set_policies(fx::Rounding rounding, fx::Overflow overflow) {
  const auto apply = [&](fx::FxFormat& f) {
    f.rounding = rounding;
    f.overflow = overflow;
  };
  apply(base.weights);
  apply(base.activations);
  apply(input);
  if (logits) apply(*logits);
  for (auto& s : stage_overrides) {
    if (s) {
      apply(s->weights);
      apply(s->activations);
    }
  }
}

namespace {

enum class BottleneckKind { Down, Plain, Up };

ConvBNParams make_conv(int kernel, int filters, const StageFormats& fmts) {
  ConvBNParams p;
  p.kernel = kernel;
  p.filters = filters;
  p.padding = PaddingMode::Same;
  p.weight_format = fmts.weights;
  p.out_format = fmts.activations;
  return p;
}

// Main path 1x1 -> 3x3 -> 1x1 (all `filters` wide), resampled at the end;
// skip path resampled and channel-matched; merged by Add + ReLU.
int add_bottleneck(ModelGraph& g, int in_node, int in_ch, int filters,
                   BottleneckKind kind, const std::string& prefix,
                   const std::string& stage, const StageFormats& fmts) {
  const auto conv_node = [&](const std::string& name, int kernel, int from) {
    return g.add_node({prefix + "." + name, LayerKind::ConvBN,
                       make_conv(kernel, filters, fmts), stage},
                      {from});
  };
  const auto relu_node = [&](const std::string& name, int from) {
    return g.add_node({prefix + "." + name, LayerKind::Relu, {}, stage}, {from});
  };

  int main = conv_node("conv_proj", 1, in_node);
  main = relu_node("relu1", main);
  main = conv_node("conv_main", 3, main);
  main = relu_node("relu2", main);
  main = conv_node("conv_exp", 1, main);
  if (kind == BottleneckKind::Down) {
    main = g.add_node({prefix + ".pool", LayerKind::MaxPool, MaxPoolParams{2}, stage},
                      {main});
  } else if (kind == BottleneckKind::Up) {
    main = g.add_node({prefix + ".up", LayerKind::Upsample, UpsampleParams{2}, stage},
                      {main});
  }

  int skip = in_node;
  if (kind == BottleneckKind::Down) {
    skip = g.add_node({prefix + ".skip_pool", LayerKind::MaxPool, MaxPoolParams{2}, stage},
                      {skip});
  } else if (kind == BottleneckKind::Up) {
    skip = g.add_node({prefix + ".skip_up", LayerKind::Upsample, UpsampleParams{2}, stage},
                      {skip});
  }
  if (in_ch != filters) {
    skip = g.add_node({prefix + ".skip_pad", LayerKind::ChannelPad,
                       ChannelPadParams{filters}, stage},
                      {skip});
  }

  const int add = g.add_node({prefix + ".add", LayerKind::Add, {}, stage}, {main, skip});
  return relu_node("relu", add);
}

}  // namespace

ModelGraph build_enet(const EnetFilters& filters, Shape input_shape,
                      const QuantConfig& quant, int n_classes) {
  for (int f : filters) {
    if (f < 1) throw std::invalid_argument("build_enet: all filter counts must be >= 1");
  }
  if (input_shape.height % 8 != 0 || input_shape.width % 8 != 0) {
    throw std::invalid_argument("build_enet: input height and width must be divisible by 8");
  }
  if (n_classes < 1) throw std::invalid_argument("build_enet: n_classes must be >= 1");

  ModelGraph g;
  g.name = "enet";
  g.input_shape = input_shape;
  g.input_format = quant.input;

  const int input = g.add_node({"input", LayerKind::Input, {}, "input"}, {});

  const StageFormats initial_fmts = quant.stage(0);
  int cur = g.add_node({"initial.conv", LayerKind::ConvBN,
                        make_conv(3, filters[0], initial_fmts), "initial"},
                       {input});
  cur = g.add_node({"initial.relu", LayerKind::Relu, {}, "initial"}, {cur});
  cur = g.add_node({"initial.pool", LayerKind::MaxPool, MaxPoolParams{2}, "initial"}, {cur});
  int cur_ch = filters[0];

  constexpr BottleneckKind block_kinds[5] = {
      BottleneckKind::Down, BottleneckKind::Down, BottleneckKind::Plain,
      BottleneckKind::Up, BottleneckKind::Up};
  for (int b = 1; b <= 5; ++b) {
    const std::string stage = "bottleneck" + std::to_string(b);
    const StageFormats fmts = quant.stage(b);
    for (int j = 0; j < 3; ++j) {
      const BottleneckKind kind = (j == 0) ? block_kinds[b - 1] : BottleneckKind::Plain;
      const std::string prefix = "b" + std::to_string(b) + "." + std::to_string(j);
      cur = add_bottleneck(g, cur, cur_ch, filters[b], kind, prefix, stage, fmts);
      cur_ch = filters[b];
    }
  }

  const StageFormats final_fmts = quant.stage(6);
  cur = g.add_node({"final.up", LayerKind::Upsample, UpsampleParams{2}, "final"}, {cur});
  ConvBNParams head = make_conv(3, n_classes, final_fmts);
  head.out_format = quant.logits_format();
  cur = g.add_node({"final.conv", LayerKind::ConvBN, std::move(head), "final"}, {cur});

  // Three exact 2x pools followed by three 2x upsamples restore the input
  // resolution whenever height and width are divisible by 8, so the trailing
  // SpatialPad is always zero here and the node is omitted.

  g.add_node({"output", LayerKind::Output, {}, "output"}, {cur});

  const auto diags = validate(g);
  if (!diags.empty()) {
    throw std::runtime_error("build_enet: produced invalid graph: " + diags.front().message);
  }
  return g;
}

std::vector<StageInfo> stage_table(ModelGraph& graph) {
  if (!graph.inferred) {
    const auto diags = validate(graph);
    if (!diags.empty()) {
      throw std::runtime_error("stage_table: invalid graph: " + diags.front().message);
    }
  }
  std::vector<StageInfo> table;
  std::map<std::string, int> index;
  Shape prev = graph.input_shape;
  for (int n : graph.topo_order()) {
    const LayerSpec& spec = graph.nodes[n];
    if (spec.stage.empty() || spec.stage == "input" || spec.stage == "output") continue;
    auto it = index.find(spec.stage);
    if (it == index.end()) {
      index[spec.stage] = int(table.size());
      table.push_back(StageInfo{spec.stage, "", prev, 0});
      it = index.find(spec.stage);
    }
    StageInfo& info = table[it->second];
    info.output = graph.out_shapes[n];
    if (spec.kind == LayerKind::ConvBN) {
      const auto& p = spec.conv();
      const int c_in =
          graph.out_shapes[graph.edges[graph.input_edges(n)[0]].from].channels;
      info.parameters += std::int64_t(p.kernel) * p.kernel * c_in * p.filters + p.filters;
    }
    prev = info.output;
  }
  // Stage kind from spatial change across the stage.
  Shape in = graph.input_shape;
  for (StageInfo& info : table) {
    if (info.output.height < in.height) info.kind = "downsample";
    else if (info.output.height > in.height) info.kind = "upsample";
    in = info.output;
  }
  return table;
}

}  // namespace pixelflow::ir
