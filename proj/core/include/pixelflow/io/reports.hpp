// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pixelflow/cost_model.hpp"
#include "pixelflow/dataflow_sim.hpp"
#include "pixelflow/enet.hpp"
#include "pixelflow/seg_metrics.hpp"

namespace pixelflow::io {

/// Left-aligned text table; the first row is the header.
std::string format_table(const std::vector<std::vector<std::string>>& rows);

std::string shape_table_text(const std::vector<ir::StageInfo>& stages,
                             std::int64_t total_parameters);
std::string shape_table_json(const std::vector<ir::StageInfo>& stages,
                             std::int64_t total_parameters);

std::string resource_report_text(const cost::ResourceEstimate& res,
                                 const cost::LatencyReport& lat);
std::string resource_report_json(const cost::ResourceEstimate& res,
                                 const cost::LatencyReport& lat);

/// Columns: edge_id, producer, consumer, capacity, max_occupancy, mean_occupancy.
std::string occupancy_csv(const std::vector<sim::EdgeTrace>& traces);

/// Aggregate occupancy statistics over a trace set:
/// memory_efficiency = sum(O_l) / sum(F_l); mean occupancy = mean(O_l / F_l).
struct OccupancySummary {
  double memory_efficiency = 0.0;
  double mean_occupancy = 0.0;
};
OccupancySummary summarize_occupancy(const std::vector<sim::EdgeTrace>& traces);

/// Depth map JSON keyed by "producer->consumer" edge names.
std::string depth_map_json(ir::ModelGraph& graph, const std::vector<int>& depths);
std::vector<int> load_depth_map(ir::ModelGraph& graph, const std::filesystem::path& path);

std::string metrics_report_text(const metrics::ConfusionMatrix& cm);
std::string metrics_report_json(const metrics::ConfusionMatrix& cm);

}  // namespace pixelflow::io
