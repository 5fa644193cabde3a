// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/reference.hpp"

#include <algorithm>
#include <cmath>

#include "pixelflow/stream_kernels.hpp"

namespace pixelflow::ref {

namespace {

struct PadSplit {
  int top, left;
};

PadSplit same_pad(int kernel) {
  return {(kernel - 1) / 2, (kernel - 1) / 2};
}

fx::FxTensor conv_fixed(const fx::FxTensor& in, const ir::ConvBNParams& p,
                        const ir::Shape& out_shape) {
  const auto prep = stream::prepare_conv(p, in.channels, in.format);
  fx::FxTensor out(out_shape.channels, out_shape.height, out_shape.width, p.out_format);
  const bool same = p.padding == ir::PaddingMode::Same;
  const auto [pad_top, pad_left] = same ? same_pad(p.kernel) : PadSplit{0, 0};
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      for (int f = 0; f < prep.filters; ++f) {
        std::int64_t acc = prep.bias_mantissas[f];
        for (int ki = 0; ki < p.kernel; ++ki) {
          const int iy = oy + ki - (same ? pad_top : 0);
          if (iy < 0 || iy >= in.height) continue;  // zero padding contributes nothing
          for (int kj = 0; kj < p.kernel; ++kj) {
            const int ix = ox + kj - (same ? pad_left : 0);
            if (ix < 0 || ix >= in.width) continue;
            for (int c = 0; c < in.channels; ++c) {
              acc = fx::mac(acc, prep.weight_at(f, c, ki, kj), in.at(c, iy, ix), prep.acc);
            }
          }
        }
        out.at(f, oy, ox) = fx::requantize_mantissa(acc, prep.src_frac, p.out_format);
      }
    }
  }
  return out;
}

fx::FxTensor eval_fixed_node(ir::ModelGraph& g, int node,
                             const std::vector<fx::FxTensor>& ins) {
  const ir::LayerSpec& spec = g.nodes[node];
  const ir::Shape& out_shape = g.shape_of(node);
  switch (spec.kind) {
    case ir::LayerKind::Input:
    case ir::LayerKind::Output:
      return ins.empty() ? fx::FxTensor{} : ins[0];
    case ir::LayerKind::ConvBN:
      return conv_fixed(ins[0], spec.conv(), out_shape);
    case ir::LayerKind::Relu: {
      fx::FxTensor out = ins[0];
      if (out.format.is_signed) {
        for (auto& m : out.data) m = std::max(m, 0);
      }
      return out;
    }
    case ir::LayerKind::MaxPool: {
      const int k = std::get<ir::MaxPoolParams>(spec.params).kernel;
      const fx::FxTensor& in = ins[0];
      fx::FxTensor out(out_shape.channels, out_shape.height, out_shape.width, in.format);
      for (int c = 0; c < out.channels; ++c) {
        for (int oy = 0; oy < out.height; ++oy) {
          for (int ox = 0; ox < out.width; ++ox) {
            std::int32_t best = in.at(c, oy * k, ox * k);
            for (int ki = 0; ki < k; ++ki) {
              for (int kj = 0; kj < k; ++kj) {
                best = std::max(best, in.at(c, oy * k + ki, ox * k + kj));
              }
            }
            out.at(c, oy, ox) = best;
          }
        }
      }
      return out;
    }
    case ir::LayerKind::Upsample: {
      const int k = std::get<ir::UpsampleParams>(spec.params).kernel;
      const fx::FxTensor& in = ins[0];
      fx::FxTensor out(out_shape.channels, out_shape.height, out_shape.width, in.format);
      for (int c = 0; c < out.channels; ++c) {
        for (int oy = 0; oy < out.height; ++oy) {
          for (int ox = 0; ox < out.width; ++ox) {
            out.at(c, oy, ox) = in.at(c, oy / k, ox / k);
          }
        }
      }
      return out;
    }
    case ir::LayerKind::SpatialPad: {
      const fx::FxTensor& in = ins[0];
      fx::FxTensor out(out_shape.channels, out_shape.height, out_shape.width, in.format);
      for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < in.height; ++y) {
          for (int x = 0; x < in.width; ++x) out.at(c, y, x) = in.at(c, y, x);
        }
      }
      return out;
    }
    case ir::LayerKind::ChannelPad: {
      const fx::FxTensor& in = ins[0];
      fx::FxTensor out(out_shape.channels, out_shape.height, out_shape.width, in.format);
      const int copy = std::min(in.channels, out.channels);
      for (int c = 0; c < copy; ++c) {
        for (int y = 0; y < in.height; ++y) {
          for (int x = 0; x < in.width; ++x) out.at(c, y, x) = in.at(c, y, x);
        }
      }
      return out;
    }
    case ir::LayerKind::Add: {
      const fx::FxTensor& a = ins[0];
      const fx::FxTensor& b = ins[1];
      const fx::FxFormat out_fmt = g.format_of(node);
      fx::FxTensor out(out_shape.channels, out_shape.height, out_shape.width, out_fmt);
      const int frac = std::max(a.format.frac_bits(), b.format.frac_bits());
      const int sh_a = frac - a.format.frac_bits();
      const int sh_b = frac - b.format.frac_bits();
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        const std::int64_t sum =
            (std::int64_t(a.data[i]) << sh_a) + (std::int64_t(b.data[i]) << sh_b);
        out.data[i] = fx::requantize_mantissa(sum, frac, out_fmt);
      }
      return out;
    }
  }
  throw std::logic_error("eval_fixed_node: unhandled kind");
}

FloatTensor conv_float(const FloatTensor& in, const ir::ConvBNParams& p,
                       const ir::Shape& out_shape) {
  FloatTensor out{out_shape, std::vector<float>(std::size_t(out_shape.elements()), 0.f)};
  const bool same = p.padding == ir::PaddingMode::Same;
  const auto [pad_top, pad_left] = same ? same_pad(p.kernel) : PadSplit{0, 0};
  const int c_in = in.shape.channels;
  for (int oy = 0; oy < out_shape.height; ++oy) {
    for (int ox = 0; ox < out_shape.width; ++ox) {
      for (int f = 0; f < p.filters; ++f) {
        double acc = p.bias.empty() ? 0.0 : double(p.bias[f]);
        for (int ki = 0; ki < p.kernel; ++ki) {
          const int iy = oy + ki - (same ? pad_top : 0);
          if (iy < 0 || iy >= in.shape.height) continue;
          for (int kj = 0; kj < p.kernel; ++kj) {
            const int ix = ox + kj - (same ? pad_left : 0);
            if (ix < 0 || ix >= in.shape.width) continue;
            for (int c = 0; c < c_in; ++c) {
              const float w =
                  p.weights[((std::size_t(f) * c_in + c) * p.kernel + ki) * p.kernel + kj];
              acc += double(w) * in.at(c, iy, ix);
            }
          }
        }
        out.at(f, oy, ox) = float(acc);
      }
    }
  }
  return out;
}

FloatTensor eval_float_node(ir::ModelGraph& g, int node,
                            const std::vector<FloatTensor>& ins) {
  const ir::LayerSpec& spec = g.nodes[node];
  const ir::Shape& out_shape = g.shape_of(node);
  const auto zeros = [&] {
    return FloatTensor{out_shape, std::vector<float>(std::size_t(out_shape.elements()), 0.f)};
  };
  switch (spec.kind) {
    case ir::LayerKind::Input:
    case ir::LayerKind::Output:
      return ins.empty() ? FloatTensor{} : ins[0];
    case ir::LayerKind::ConvBN:
      return conv_float(ins[0], spec.conv(), out_shape);
    case ir::LayerKind::Relu: {
      FloatTensor out = ins[0];
      for (auto& v : out.data) v = std::max(v, 0.f);
      return out;
    }
    case ir::LayerKind::MaxPool: {
      const int k = std::get<ir::MaxPoolParams>(spec.params).kernel;
      FloatTensor out = zeros();
      for (int c = 0; c < out_shape.channels; ++c) {
        for (int oy = 0; oy < out_shape.height; ++oy) {
          for (int ox = 0; ox < out_shape.width; ++ox) {
            float best = ins[0].at(c, oy * k, ox * k);
            for (int ki = 0; ki < k; ++ki) {
              for (int kj = 0; kj < k; ++kj) {
                best = std::max(best, ins[0].at(c, oy * k + ki, ox * k + kj));
              }
            }
            out.at(c, oy, ox) = best;
          }
        }
      }
      return out;
    }
    case ir::LayerKind::Upsample: {
      const int k = std::get<ir::UpsampleParams>(spec.params).kernel;
      FloatTensor out = zeros();
      for (int c = 0; c < out_shape.channels; ++c) {
        for (int oy = 0; oy < out_shape.height; ++oy) {
          for (int ox = 0; ox < out_shape.width; ++ox) {
            out.at(c, oy, ox) = ins[0].at(c, oy / k, ox / k);
          }
        }
      }
      return out;
    }
    case ir::LayerKind::SpatialPad: {
      FloatTensor out = zeros();
      for (int c = 0; c < ins[0].shape.channels; ++c) {
        for (int y = 0; y < ins[0].shape.height; ++y) {
          for (int x = 0; x < ins[0].shape.width; ++x) {
            out.at(c, y, x) = ins[0].at(c, y, x);
          }
        }
      }
      return out;
    }
    case ir::LayerKind::ChannelPad: {
      FloatTensor out = zeros();
      const int copy = std::min(ins[0].shape.channels, out_shape.channels);
      for (int c = 0; c < copy; ++c) {
        for (int y = 0; y < out_shape.height; ++y) {
          for (int x = 0; x < out_shape.width; ++x) {
            out.at(c, y, x) = ins[0].at(c, y, x);
          }
        }
      }
      return out;
    }
    case ir::LayerKind::Add: {
      FloatTensor out = ins[0];
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += ins[1].data[i];
      return out;
    }
  }
  throw std::logic_error("eval_float_node: unhandled kind");
}

void require_valid(ir::ModelGraph& graph) {
  if (!graph.inferred) {
    const auto diags = ir::validate(graph, true);
    if (!diags.empty()) {
      throw std::runtime_error("reference evaluator: invalid graph: " +
                               diags.front().message);
    }
  }
}

}  // namespace

fx::FxTensor run_fixed(ir::ModelGraph& graph, const fx::FxTensor& input) {
  require_valid(graph);
  if (input.channels != graph.input_shape.channels ||
      input.height != graph.input_shape.height ||
      input.width != graph.input_shape.width) {
    throw std::invalid_argument("run_fixed: input shape mismatch");
  }
  std::vector<fx::FxTensor> results(graph.nodes.size());
  for (int node : graph.topo_order()) {
    std::vector<fx::FxTensor> ins;
    for (int e : graph.input_edges(node)) ins.push_back(results[graph.edges[e].from]);
    if (graph.nodes[node].kind == ir::LayerKind::Input) {
      results[node] = input;
    } else {
      results[node] = eval_fixed_node(graph, node, ins);
    }
  }
  return results[graph.output_node()];
}

FloatTensor run_float(ir::ModelGraph& graph, const FloatTensor& input) {
  require_valid(graph);
  std::vector<FloatTensor> results(graph.nodes.size());
  for (int node : graph.topo_order()) {
    std::vector<FloatTensor> ins;
    for (int e : graph.input_edges(node)) ins.push_back(results[graph.edges[e].from]);
    if (graph.nodes[node].kind == ir::LayerKind::Input) {
      results[node] = input;
    } else {
      results[node] = eval_float_node(graph, node, ins);
    }
  }
  return results[graph.output_node()];
}

double quantization_error_bound(ir::ModelGraph& graph) {
  require_valid(graph);
  // Per-node worst-case |fixed - float| assuming no saturation:
  //   conv: sum|w_q| * err_in + (weight step / 2) * window_terms * act_max
  //         + bias step + output rounding step / 2
  //   add: err_a + err_b + rounding; other layers are non-expanding.
  std::vector<double> err(graph.nodes.size(), 0.0);
  for (int node : graph.topo_order()) {
    const ir::LayerSpec& spec = graph.nodes[node];
    const auto ins = graph.input_edges(node);
    switch (spec.kind) {
      case ir::LayerKind::Input:
        err[node] = 0.0;  // inputs are exactly representable by construction
        break;
      case ir::LayerKind::ConvBN: {
        const auto& p = spec.conv();
        const int src = graph.edges[ins[0]].from;
        const double err_in = err[src];
        const auto& in_fmt = graph.format_of(src);
        const int c_in = graph.shape_of(src).channels;
        const auto prep = stream::prepare_conv(p, c_in, in_fmt);
        double w_abs_max = 0.0;
        for (int f = 0; f < p.filters; ++f) {
          double sum_abs = 0.0;
          for (int c = 0; c < c_in; ++c) {
            for (int cell = 0; cell < p.kernel * p.kernel; ++cell) {
              sum_abs += std::abs(std::ldexp(
                  double(prep.weight_mantissas[(std::size_t(f) * c_in + c) *
                                                   p.kernel * p.kernel +
                                               cell]),
                  -p.weight_format.frac_bits()));
            }
          }
          w_abs_max = std::max(w_abs_max, sum_abs);
        }
        const double terms = double(p.kernel) * p.kernel * c_in;
        const double act_max = in_fmt.max_value();
        const double w_step = p.weight_format.step();
        const double out_step = p.out_format.step();
        err[node] = w_abs_max * err_in + 0.5 * w_step * terms * act_max +
                    std::ldexp(1.0, -prep.src_frac) + 0.5 * out_step;
        break;
      }
      case ir::LayerKind::Add: {
        const double a = err[graph.edges[ins[0]].from];
        const double b = err[graph.edges[ins[1]].from];
        err[node] = a + b + 0.5 * graph.format_of(node).step();
        break;
      }
      default: {
        double worst = 0.0;
        for (int e : ins) worst = std::max(worst, err[graph.edges[e].from]);
        err[node] = worst;
        break;
      }
    }
  }
  return err[graph.output_node()];
}

}  // namespace pixelflow::ref
