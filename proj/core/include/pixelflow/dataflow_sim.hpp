// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "pixelflow/model_ir.hpp"

namespace pixelflow::sim {

enum class ConvImpl { LineBuffer, Encoded };

struct SimConfig {
  std::vector<int> fifo_depths;  // per edge id; empty selects the tensor-sized baseline
  int reuse_factor = 1;
  std::int64_t cycle_budget = 0;  // 0 derives a bound from total work
  ConvImpl conv_impl = ConvImpl::LineBuffer;
};

enum class SimStatus { Completed, Deadlock, BudgetExhausted };

std::string_view status_name(SimStatus status);

struct EdgeTrace {
  int edge = -1;
  std::string producer;
  std::string consumer;
  int capacity = 0;
  std::int64_t max_occupancy = 0;
  double mean_occupancy = 0.0;  // time-averaged element count

  bool operator==(const EdgeTrace&) const = default;
};

struct SimResult {
  SimStatus status = SimStatus::Deadlock;
  std::vector<fx::FxTensor> outputs;  // one per input image when completed
  std::int64_t makespan_cycles = 0;
  std::vector<EdgeTrace> traces;
  std::string diagnostic;  // FIFO/process state dump on deadlock or budget exhaustion
};

/// Safety-default capacities: each FIFO sized to the full pixel count of the
/// tensor flowing over the edge.
std::vector<int> baseline_depths(ir::ModelGraph& graph);

/// Runs the layer-per-process dataflow simulation. Every input image streams
/// back-to-back through the pipeline (dataflow batching). Deterministic:
/// identical inputs and config produce identical results and traces.
SimResult simulate(ir::ModelGraph& graph, const std::vector<fx::FxTensor>& inputs,
                   const SimConfig& config = {});

/// Cycles until the last output pixel of the last image.
/// Throws std::runtime_error if the simulation does not complete.
std::int64_t makespan(ir::ModelGraph& graph, const std::vector<fx::FxTensor>& inputs,
                      const SimConfig& config = {});

/// Profiles FIFO occupancy under baseline depths on the calibration images,
/// then returns per-edge depth = max(observed max occupancy, 1), scaled by
/// `margin`. The optimized depths are verified by re-simulation: completion
/// with bit-identical outputs, or std::runtime_error.
std::vector<int> optimize_fifo_depths(ir::ModelGraph& graph,
                                      const std::vector<fx::FxTensor>& calibration,
                                      double margin = 1.0,
                                      const SimConfig& config = {});

}  // namespace pixelflow::sim
