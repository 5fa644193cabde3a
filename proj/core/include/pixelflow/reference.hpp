// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pixelflow/model_ir.hpp"

namespace pixelflow::ref {

/// Dense, layer-at-a-time fixed-point evaluation of the whole graph.
/// Shares the arithmetic primitives (quantize / mac / requantize) with the
/// streaming engine but none of the window or scheduling machinery, so the
/// two paths cross-check each other.
fx::FxTensor run_fixed(ir::ModelGraph& graph, const fx::FxTensor& input);

/// CHW float tensor for the floating-point reference path.
struct FloatTensor {
  ir::Shape shape;
  std::vector<float> data;

  float& at(int c, int y, int x) {
    return data[(std::size_t(c) * shape.height + y) * shape.width + x];
  }
  float at(int c, int y, int x) const {
    return data[(std::size_t(c) * shape.height + y) * shape.width + x];
  }
};

/// Float32 evaluation using the folded weights directly (no quantization).
FloatTensor run_float(ir::ModelGraph& graph, const FloatTensor& input);

/// Conservative worst-case |fixed - float| bound at the output, propagated
/// per layer from quantization steps and weight magnitudes. Valid while no
/// activation saturates; reported alongside run results.
double quantization_error_bound(ir::ModelGraph& graph);

}  // namespace pixelflow::ref
