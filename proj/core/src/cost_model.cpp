// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/cost_model.hpp"

namespace pixelflow::cost {

std::int64_t buffer_elements(ConvImpl impl, int kernel, int width) {
  if (kernel < 1) throw std::invalid_argument("buffer_elements: kernel must be >= 1");
  if (width < kernel) throw std::invalid_argument("buffer_elements: width must be >= kernel");
  if (kernel == 1) return 0;
  const auto k = std::int64_t(kernel);
  const auto w = std::int64_t(width);
  if (impl == ConvImpl::LineBuffer) return (k - 1) * w;
  return k * k * k * (w - k + 1);
}

std::int64_t multipliers(int kernel, int c_in, int filters, int reuse_factor) {
  if (kernel < 1 || c_in < 1 || filters < 1) {
    throw std::invalid_argument("multipliers: layer dimensions must be >= 1");
  }
  if (reuse_factor < 1) throw std::invalid_argument("multipliers: RF must be >= 1");
  const std::int64_t total = std::int64_t(kernel) * kernel * c_in * filters;
  return (total + reuse_factor - 1) / reuse_factor;
}

std::pair<ResourceEstimate, LatencyReport> estimate(ir::ModelGraph& graph,
                                                    const std::vector<int>& fifo_depths,
                                                    ConvImpl impl, int reuse_factor,
                                                    double clock_ns, int batch,
                                                    std::int64_t makespan_cycles) {
  if (!graph.inferred) {
    const auto diags = ir::validate(graph);
    if (!diags.empty()) {
      throw std::runtime_error("estimate: invalid graph: " + diags.front().message);
    }
  }
  if (fifo_depths.size() != graph.edges.size()) {
    throw std::invalid_argument("estimate: depth map size does not match edge count");
  }
  if (clock_ns <= 0.0) throw std::invalid_argument("estimate: clock_ns must be > 0");

  ResourceEstimate res;
  for (int n : graph.topo_order()) {
    const ir::LayerSpec& spec = graph.nodes[n];
    if (spec.kind == ir::LayerKind::Input || spec.kind == ir::LayerKind::Output) continue;
    const auto ins = graph.input_edges(n);
    const ir::Shape in_shape = graph.shape_of(graph.edges[ins[0]].from);
    const fx::FxFormat in_fmt = graph.format_of(graph.edges[ins[0]].from);
    const std::int64_t pixel_bits = std::int64_t(in_shape.channels) * in_fmt.total_bits;

    LayerResource r;
    r.layer = spec.name;
    r.kind = std::string(ir::kind_name(spec.kind));
    switch (spec.kind) {
      case ir::LayerKind::ConvBN: {
        const auto& p = spec.conv();
        // Same-padding convs buffer the zero-injected stream, one kernel-width
        // wider than the layer input.
        const int stream_w = p.padding == ir::PaddingMode::Same
                                 ? in_shape.width + p.kernel - 1
                                 : in_shape.width;
        r.buffer_elements = buffer_elements(impl, p.kernel, stream_w);
        r.buffer_bits = r.buffer_elements * pixel_bits;
        r.multipliers = multipliers(p.kernel, in_shape.channels, p.filters, reuse_factor);
        r.register_bits =
            std::int64_t(p.kernel) * p.kernel * pixel_bits + 3 * 32;  // window + counters
        break;
      }
      case ir::LayerKind::MaxPool: {
        const int k = std::get<ir::MaxPoolParams>(spec.params).kernel;
        // Pooling always uses the shift-register structure.
        r.buffer_elements = buffer_elements(ConvImpl::LineBuffer, k, in_shape.width);
        r.buffer_bits = r.buffer_elements * pixel_bits;
        r.register_bits = std::int64_t(k) * k * pixel_bits + 3 * 32;
        break;
      }
      case ir::LayerKind::Upsample: {
        r.buffer_elements = in_shape.width;  // one replayed row
        r.buffer_bits = r.buffer_elements * pixel_bits;
        r.register_bits = 2 * 32;
        break;
      }
      default:
        r.register_bits = 2 * 32;
        break;
    }
    res.total_buffer_elements += r.buffer_elements;
    res.total_buffer_bits += r.buffer_bits;
    res.total_multipliers += r.multipliers;
    res.total_register_bits += r.register_bits;
    res.layers.push_back(std::move(r));
  }

  for (int e = 0; e < int(graph.edges.size()); ++e) {
    const ir::Shape s = graph.shape_of(graph.edges[e].from);
    const fx::FxFormat f = graph.format_of(graph.edges[e].from);
    res.fifo_bits += std::int64_t(fifo_depths[e]) * s.channels * f.total_bits;
  }

  LatencyReport lat;
  lat.cycles = makespan_cycles;
  lat.clock_ns = clock_ns;
  lat.latency_ms = double(makespan_cycles) * clock_ns * 1e-6;
  lat.batch = batch;
  return {std::move(res), lat};
}

}  // namespace pixelflow::cost
