// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "pixelflow/model_ir.hpp"

namespace pixelflow::cost {

enum class ConvImpl { LineBuffer, Encoded };

/// Window-history storage in pixel-vector slots for one convolution layer
/// streaming rows of width w:
///   line_buffer: (K-1) * W      (K-1 shift registers of depth W)
///   encoded:     K^2 * K * (W-K+1)
/// A 1x1 kernel needs no window history under either scheme.
std::int64_t buffer_elements(ConvImpl impl, int kernel, int width);

/// Multiplier (DSP proxy) count: ceil(K^2 * C_in * filters / RF).
std::int64_t multipliers(int kernel, int c_in, int filters, int reuse_factor);

struct LayerResource {
  std::string layer;
  std::string kind;
  std::int64_t buffer_elements = 0;  // pixel-vector slots
  std::int64_t buffer_bits = 0;      // slots * channels * activation bits
  std::int64_t multipliers = 0;
  std::int64_t register_bits = 0;    // FF proxy: window bits + counters
};

struct ResourceEstimate {
  std::vector<LayerResource> layers;
  std::int64_t total_buffer_elements = 0;
  std::int64_t total_buffer_bits = 0;
  std::int64_t total_multipliers = 0;
  std::int64_t total_register_bits = 0;
  std::int64_t fifo_bits = 0;  // sum over edges of depth * pixel-vector bits
  // LUT pressure is not modeled; reports state this explicitly.
};

struct LatencyReport {
  std::int64_t cycles = 0;
  double clock_ns = 0.0;
  double latency_ms = 0.0;  // cycles * clock_ns * 1e-6
  int batch = 1;
};

/// Pure aggregation: per-layer storage/multiplier counts plus FIFO bits for
/// the given depth map. Latency comes from a completed simulation's
/// makespan_cycles and the clock period; no simulation state is consulted.
std::pair<ResourceEstimate, LatencyReport> estimate(ir::ModelGraph& graph,
                                                    const std::vector<int>& fifo_depths,
                                                    ConvImpl impl, int reuse_factor,
                                                    double clock_ns, int batch,
                                                    std::int64_t makespan_cycles);

}  // namespace pixelflow::cost
