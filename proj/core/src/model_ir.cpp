// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/model_ir.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>

namespace pixelflow::ir {

namespace {

int arity(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return 0;
    case LayerKind::Add: return 2;
    default: return 1;
  }
}

}  // namespace

std::string Shape::to_string() const {
  return std::to_string(channels) + " x " + std::to_string(height) + " x " +
         std::to_string(width);
}

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "Input";
    case LayerKind::Output: return "Output";
    case LayerKind::ConvBN: return "ConvBN";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::Upsample: return "Upsample";
    case LayerKind::SpatialPad: return "SpatialPad";
    case LayerKind::ChannelPad: return "ChannelPad";
    case LayerKind::Relu: return "Relu";
    case LayerKind::Add: return "Add";
  }
  return "?";
}

int ModelGraph::add_node(LayerSpec spec, const std::vector<int>& inputs) {
  const int id = int(nodes.size());
  nodes.push_back(std::move(spec));
  int port = 0;
  for (int in : inputs) {
    edges.push_back(Edge{in, id, port++});
  }
  inferred = false;
  return id;
}

std::vector<int> ModelGraph::input_edges(int node) const {
  std::vector<int> result;
  for (int e = 0; e < int(edges.size()); ++e) {
    if (edges[e].to == node) result.push_back(e);
  }
  std::sort(result.begin(), result.end(),
            [&](int a, int b) { return edges[a].to_port < edges[b].to_port; });
  return result;
}

std::vector<int> ModelGraph::output_edges(int node) const {
  std::vector<int> result;
  for (int e = 0; e < int(edges.size()); ++e) {
    if (edges[e].from == node) result.push_back(e);
  }
  return result;
}

int ModelGraph::input_node() const {
  for (int i = 0; i < int(nodes.size()); ++i) {
    if (nodes[i].kind == LayerKind::Input) return i;
  }
  return -1;
}

int ModelGraph::output_node() const {
  for (int i = 0; i < int(nodes.size()); ++i) {
    if (nodes[i].kind == LayerKind::Output) return i;
  }
  return -1;
}

int ModelGraph::find_node(std::string_view name) const {
  for (int i = 0; i < int(nodes.size()); ++i) {
    if (nodes[i].name == name) return i;
  }
  return -1;
}

std::vector<int> ModelGraph::topo_order() const {
  std::vector<int> indegree(nodes.size(), 0);
  for (const Edge& e : edges) ++indegree[e.to];
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < int(nodes.size()); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<int> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    const int n = ready.top();
    ready.pop();
    order.push_back(n);
    for (const Edge& e : edges) {
      if (e.from == n && --indegree[e.to] == 0) ready.push(e.to);
    }
  }
  if (order.size() != nodes.size()) {
    throw std::runtime_error("topo_order: graph contains a cycle");
  }
  return order;
}

const Shape& ModelGraph::shape_of(int node) const {
  if (!inferred) throw std::logic_error("shape_of: graph not validated");
  return out_shapes.at(node);
}

const fx::FxFormat& ModelGraph::format_of(int node) const {
  if (!inferred) throw std::logic_error("format_of: graph not validated");
  return out_formats.at(node);
}

namespace {

struct Inference {
  ModelGraph& g;
  std::vector<Diagnostic>& diags;

  void flag(int node, std::string msg) { diags.push_back({node, std::move(msg)}); }

  // Returns false when the node output could not be determined.
  bool infer_node(int n, const std::vector<Shape>& in_shapes,
                  const std::vector<fx::FxFormat>& in_formats, Shape& out,
                  fx::FxFormat& out_fmt) {
    LayerSpec& spec = g.nodes[n];
    switch (spec.kind) {
      case LayerKind::Input:
        out = g.input_shape;
        out_fmt = g.input_format;
        return true;
      case LayerKind::Output:
      case LayerKind::Relu:
        out = in_shapes[0];
        out_fmt = in_formats[0];
        return true;
      case LayerKind::ConvBN: {
        const auto& p = spec.conv();
        if (p.kernel < 1) {
          flag(n, "ConvBN kernel must be >= 1");
          return false;
        }
        if (p.filters < 1) {
          flag(n, "ConvBN filters must be >= 1");
          return false;
        }
        const Shape& in = in_shapes[0];
        if (p.padding == PaddingMode::Valid &&
            (in.height < p.kernel || in.width < p.kernel)) {
          flag(n, "ConvBN valid padding needs input >= kernel, got " + in.to_string());
          return false;
        }
        const std::size_t want =
            std::size_t(p.filters) * in.channels * p.kernel * p.kernel;
        if (!p.weights.empty() && p.weights.size() != want) {
          flag(n, "ConvBN weight blob has " + std::to_string(p.weights.size()) +
                      " elements, expected " + std::to_string(want));
          return false;
        }
        if (!p.bias.empty() && p.bias.size() != std::size_t(p.filters)) {
          flag(n, "ConvBN bias size mismatch");
          return false;
        }
        try {
          const auto terms = std::int64_t(p.kernel) * p.kernel * in.channels;
          g.acc_formats[n] = fx::AccFormat::for_dot(p.weight_format, in_formats[0], terms);
        } catch (const std::exception& e) {
          flag(n, std::string("ConvBN accumulator sizing: ") + e.what());
          return false;
        }
        out.channels = p.filters;
        if (p.padding == PaddingMode::Same) {
          out.height = in.height;
          out.width = in.width;
        } else {
          out.height = in.height - p.kernel + 1;
          out.width = in.width - p.kernel + 1;
        }
        out_fmt = p.out_format;
        return true;
      }
      case LayerKind::MaxPool: {
        const auto& p = std::get<MaxPoolParams>(spec.params);
        const Shape& in = in_shapes[0];
        if (p.kernel < 1 || in.height < p.kernel || in.width < p.kernel) {
          flag(n, "MaxPool kernel invalid for input " + in.to_string());
          return false;
        }
        out = {in.channels, in.height / p.kernel, in.width / p.kernel};
        out_fmt = in_formats[0];
        return true;
      }
      case LayerKind::Upsample: {
        const auto& p = std::get<UpsampleParams>(spec.params);
        if (p.kernel < 1) {
          flag(n, "Upsample kernel must be >= 1");
          return false;
        }
        const Shape& in = in_shapes[0];
        out = {in.channels, in.height * p.kernel, in.width * p.kernel};
        out_fmt = in_formats[0];
        return true;
      }
      case LayerKind::SpatialPad: {
        const auto& p = std::get<SpatialPadParams>(spec.params);
        if (p.pad < 0) {
          flag(n, "SpatialPad pad must be >= 0");
          return false;
        }
        const Shape& in = in_shapes[0];
        out = {in.channels, in.height + p.pad, in.width + p.pad};
        out_fmt = in_formats[0];
        return true;
      }
      case LayerKind::ChannelPad: {
        const auto& p = std::get<ChannelPadParams>(spec.params);
        if (p.target_channels < 1) {
          flag(n, "ChannelPad target_channels must be >= 1");
          return false;
        }
        const Shape& in = in_shapes[0];
        out = {p.target_channels, in.height, in.width};
        out_fmt = in_formats[0];
        return true;
      }
      case LayerKind::Add: {
        if (!(in_shapes[0] == in_shapes[1])) {
          flag(n, "Add operand shapes differ: " + in_shapes[0].to_string() + " vs " +
                      in_shapes[1].to_string());
          return false;
        }
        out = in_shapes[0];
        out_fmt = in_formats[0];  // main-path format wins
        return true;
      }
    }
    return false;
  }
};

}  // namespace

std::vector<Diagnostic> validate(ModelGraph& graph, bool require_weights) {
  std::vector<Diagnostic> diags;
  graph.inferred = false;

  const int n = int(graph.nodes.size());
  if (n == 0) {
    diags.push_back({-1, "graph has no nodes"});
    return diags;
  }
  for (const Edge& e : graph.edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
      diags.push_back({-1, "edge references unknown node"});
      return diags;
    }
  }

  int inputs = 0, outputs = 0;
  std::set<std::string> names;
  for (int i = 0; i < n; ++i) {
    const LayerSpec& spec = graph.nodes[i];
    if (spec.kind == LayerKind::Input) ++inputs;
    if (spec.kind == LayerKind::Output) ++outputs;
    if (!spec.name.empty() && !names.insert(spec.name).second) {
      diags.push_back({i, "duplicate node name '" + spec.name + "'"});
    }
    const auto in_edges = graph.input_edges(i);
    if (int(in_edges.size()) != arity(spec.kind)) {
      diags.push_back({i, std::string(kind_name(spec.kind)) + " expects " +
                              std::to_string(arity(spec.kind)) + " input(s), has " +
                              std::to_string(in_edges.size())});
    } else {
      for (int p = 0; p < int(in_edges.size()); ++p) {
        if (graph.edges[in_edges[p]].to_port != p) {
          diags.push_back({i, "input ports must be 0..arity-1 without gaps"});
          break;
        }
      }
    }
    if (spec.kind != LayerKind::Output && graph.output_edges(i).empty()) {
      diags.push_back({i, "node output feeds nothing"});
    }
    if (require_weights && spec.kind == LayerKind::ConvBN && spec.conv().weights.empty()) {
      diags.push_back({i, "ConvBN has no weights attached"});
    }
  }
  if (inputs != 1) diags.push_back({-1, "graph must have exactly one Input node"});
  if (outputs != 1) diags.push_back({-1, "graph must have exactly one Output node"});

  try {
    graph.input_format.validate();
  } catch (const std::exception& e) {
    diags.push_back({-1, std::string("input format: ") + e.what()});
  }
  if (graph.input_shape.channels < 1 || graph.input_shape.height < 1 ||
      graph.input_shape.width < 1) {
    diags.push_back({-1, "input shape must be positive"});
  }

  std::vector<int> order;
  try {
    order = graph.topo_order();
  } catch (const std::exception& e) {
    diags.push_back({-1, e.what()});
  }

  if (!diags.empty()) return diags;

  graph.out_shapes.assign(n, {});
  graph.out_formats.assign(n, {});
  graph.acc_formats.assign(n, std::nullopt);
  Inference inf{graph, diags};
  std::vector<bool> known(n, false);
  for (int node : order) {
    const auto in_edges = graph.input_edges(node);
    std::vector<Shape> in_shapes;
    std::vector<fx::FxFormat> in_formats;
    bool ready = true;
    for (int e : in_edges) {
      const int src = graph.edges[e].from;
      if (!known[src]) {
        ready = false;
        break;
      }
      in_shapes.push_back(graph.out_shapes[src]);
      in_formats.push_back(graph.out_formats[src]);
    }
    if (!ready) continue;
    try {
      if (graph.nodes[node].kind == LayerKind::ConvBN) {
        graph.nodes[node].conv().weight_format.validate();
        graph.nodes[node].conv().out_format.validate();
      }
      known[node] = inf.infer_node(node, in_shapes, in_formats,
                                   graph.out_shapes[node], graph.out_formats[node]);
    } catch (const std::exception& e) {
      diags.push_back({node, e.what()});
    }
  }

  if (diags.empty()) graph.inferred = true;
  return diags;
}

void fold_batchnorm(std::vector<float>& weights, std::vector<float>& bias,
                    int filters, const BnParams& bn) {
  if (filters < 1 || weights.size() % std::size_t(filters) != 0) {
    throw std::invalid_argument("fold_batchnorm: weights not divisible by filter count");
  }
  const auto check = [&](const std::vector<float>& v, const char* what) {
    if (v.size() != std::size_t(filters)) {
      throw std::invalid_argument(std::string("fold_batchnorm: ") + what +
                                  " size does not match filter count");
    }
  };
  check(bn.gamma, "gamma");
  check(bn.beta, "beta");
  check(bn.moving_mean, "moving_mean");
  check(bn.moving_variance, "moving_variance");
  if (bias.empty()) bias.assign(filters, 0.0f);
  check(bias, "bias");

  const std::size_t per_filter = weights.size() / filters;
  for (int f = 0; f < filters; ++f) {
    const double denom = double(bn.moving_variance[f]) + double(bn.epsilon);
    if (!(denom > 0.0)) {
      throw std::invalid_argument("fold_batchnorm: variance + epsilon must be > 0");
    }
    const double scale = double(bn.gamma[f]) / std::sqrt(denom);
    for (std::size_t i = 0; i < per_filter; ++i) {
      weights[f * per_filter + i] = float(weights[f * per_filter + i] * scale);
    }
    bias[f] = float((double(bias[f]) - bn.moving_mean[f]) * scale + bn.beta[f]);
  }
}

std::int64_t parameter_count(ModelGraph& graph) {
  if (!graph.inferred) {
    const auto diags = validate(graph);
    if (!diags.empty()) {
      throw std::runtime_error("parameter_count: invalid graph: " + diags.front().message);
    }
  }
  std::int64_t total = 0;
  for (int i = 0; i < int(graph.nodes.size()); ++i) {
    const LayerSpec& spec = graph.nodes[i];
    if (spec.kind != LayerKind::ConvBN) continue;
    const auto& p = spec.conv();
    const int c_in = graph.out_shapes[graph.edges[graph.input_edges(i)[0]].from].channels;
    total += std::int64_t(p.kernel) * p.kernel * c_in * p.filters + p.filters;
  }
  return total;
}

void attach_random_weights(ModelGraph& graph, std::uint64_t seed) {
  if (!graph.inferred) {
    const auto diags = validate(graph);
    if (!diags.empty()) {
      throw std::runtime_error("attach_random_weights: invalid graph: " +
                               diags.front().message);
    }
  }
  for (int i = 0; i < int(graph.nodes.size()); ++i) {
    LayerSpec& spec = graph.nodes[i];
    if (spec.kind != LayerKind::ConvBN) continue;
    auto& p = spec.conv();
    if (!p.weights.empty()) continue;
    const int c_in = graph.out_shapes[graph.edges[graph.input_edges(i)[0]].from].channels;
    const std::size_t count = std::size_t(p.filters) * c_in * p.kernel * p.kernel;
    std::mt19937_64 rng(seed + std::uint64_t(i) * 0x9e3779b97f4a7c15ull);
    // Uniform in +-limit, drawn via raw engine output so the stream is
    // identical across standard library implementations.
    const double limit = p.weight_format.max_value() / std::sqrt(double(p.kernel) * p.kernel * c_in);
    auto draw = [&](double lim) {
      const double u = double(rng() >> 11) / double(std::uint64_t{1} << 53);
      return (2.0 * u - 1.0) * lim;
    };
    p.weights.resize(count);
    for (auto& w : p.weights) w = float(draw(limit));
    p.bias.resize(p.filters);
    for (auto& b : p.bias) b = float(draw(limit * 0.5));
  }
  graph.inferred = false;
  const auto diags = validate(graph, true);
  if (!diags.empty()) {
    throw std::runtime_error("attach_random_weights: " + diags.front().message);
  }
}

}  // namespace pixelflow::ir
