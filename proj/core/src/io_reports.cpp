// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/io/reports.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pixelflow::io {

using nlohmann::json;

std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (row.size() > widths.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], row[i].size());
    }
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      out << std::left << std::setw(int(widths[i]) + 2) << rows[r][i];
    }
    out << "\n";
    if (r == 0) {
      for (std::size_t i = 0; i < widths.size(); ++i) {
        out << std::string(widths[i], '-') << "  ";
      }
      out << "\n";
    }
  }
  return out.str();
}

namespace {

std::string pretty_stage(const std::string& stage) {
  if (stage == "initial") return "Initial";
  if (stage == "final") return "Final";
  if (stage.rfind("bottleneck", 0) == 0) {
    return "3x bottleneck " + stage.substr(10);
  }
  return stage;
}

}  // namespace

std::string shape_table_text(const std::vector<ir::StageInfo>& stages,
                             std::int64_t total_parameters) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Layer", "Type", "Output resolution", "Parameters"});
  for (const auto& s : stages) {
    rows.push_back({pretty_stage(s.stage), s.kind, s.output.to_string(),
                    std::to_string(s.parameters)});
  }
  std::ostringstream out;
  out << format_table(rows);
  out << "total parameters: " << total_parameters << "\n";
  return out.str();
}

std::string shape_table_json(const std::vector<ir::StageInfo>& stages,
                             std::int64_t total_parameters) {
  json arr = json::array();
  for (const auto& s : stages) {
    arr.push_back({{"stage", s.stage},
                   {"type", s.kind},
                   {"output", {s.output.channels, s.output.height, s.output.width}},
                   {"parameters", s.parameters}});
  }
  return json{{"stages", arr}, {"total_parameters", total_parameters}}.dump(2);
}

std::string resource_report_text(const cost::ResourceEstimate& res,
                                 const cost::LatencyReport& lat) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Layer", "Kind", "BufferElems", "BufferBits", "Mult", "RegBits"});
  for (const auto& l : res.layers) {
    rows.push_back({l.layer, l.kind, std::to_string(l.buffer_elements),
                    std::to_string(l.buffer_bits), std::to_string(l.multipliers),
                    std::to_string(l.register_bits)});
  }
  rows.push_back({"TOTAL", "", std::to_string(res.total_buffer_elements),
                  std::to_string(res.total_buffer_bits),
                  std::to_string(res.total_multipliers),
                  std::to_string(res.total_register_bits)});
  std::ostringstream out;
  out << format_table(rows);
  out << "fifo bits: " << res.fifo_bits << "\n";
  out << "lut: not modeled\n";
  out << std::fixed << std::setprecision(4);
  out << "latency: " << lat.cycles << " cycles @ " << lat.clock_ns << " ns = "
      << lat.latency_ms << " ms (batch " << lat.batch << ")\n";
  return out.str();
}

std::string resource_report_json(const cost::ResourceEstimate& res,
                                 const cost::LatencyReport& lat) {
  json layers = json::array();
  for (const auto& l : res.layers) {
    layers.push_back({{"layer", l.layer},
                      {"kind", l.kind},
                      {"buffer_elements", l.buffer_elements},
                      {"buffer_bits", l.buffer_bits},
                      {"multipliers", l.multipliers},
                      {"register_bits", l.register_bits}});
  }
  return json{{"layers", layers},
              {"totals",
               {{"buffer_elements", res.total_buffer_elements},
                {"buffer_bits", res.total_buffer_bits},
                {"multipliers", res.total_multipliers},
                {"register_bits", res.total_register_bits},
                {"fifo_bits", res.fifo_bits},
                {"lut", "not modeled"}}},
              {"latency",
               {{"cycles", lat.cycles},
                {"clock_ns", lat.clock_ns},
                {"latency_ms", lat.latency_ms},
                {"batch", lat.batch}}}}
      .dump(2);
}

std::string occupancy_csv(const std::vector<sim::EdgeTrace>& traces) {
  std::ostringstream out;
  out << "edge_id,producer,consumer,capacity,max_occupancy,mean_occupancy\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& t : traces) {
    out << t.edge << "," << t.producer << "," << t.consumer << "," << t.capacity << ","
        << t.max_occupancy << "," << t.mean_occupancy << "\n";
  }
  return out.str();
}

OccupancySummary summarize_occupancy(const std::vector<sim::EdgeTrace>& traces) {
  OccupancySummary s;
  if (traces.empty()) return s;
  double occ = 0.0, cap = 0.0, ratio = 0.0;
  for (const auto& t : traces) {
    occ += double(t.max_occupancy);
    cap += double(t.capacity);
    ratio += double(t.max_occupancy) / double(t.capacity);
  }
  s.memory_efficiency = cap > 0.0 ? occ / cap : 0.0;
  s.mean_occupancy = ratio / double(traces.size());
  return s;
}

std::string depth_map_json(ir::ModelGraph& graph, const std::vector<int>& depths) {
  if (depths.size() != graph.edges.size()) {
    throw std::invalid_argument("depth_map_json: depth count does not match edge count");
  }
  json edges = json::object();
  for (int e = 0; e < int(graph.edges.size()); ++e) {
    const std::string key = graph.nodes[graph.edges[e].from].name + "->" +
                            graph.nodes[graph.edges[e].to].name;
    if (edges.contains(key)) {
      throw std::runtime_error("depth_map_json: duplicate edge key '" + key + "'");
    }
    edges[key] = depths[e];
  }
  return json{{"edges", edges}}.dump(2);
}

std::vector<int> load_depth_map(ir::ModelGraph& graph, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": bad JSON: " + e.what());
  }
  const json& edges = j.at("edges");
  std::vector<int> depths(graph.edges.size(), 0);
  for (int e = 0; e < int(graph.edges.size()); ++e) {
    const std::string key = graph.nodes[graph.edges[e].from].name + "->" +
                            graph.nodes[graph.edges[e].to].name;
    if (!edges.contains(key)) {
      throw std::runtime_error(path.string() + ": missing depth for edge '" + key + "'");
    }
    depths[e] = edges.at(key).get<int>();
    if (depths[e] < 1) {
      throw std::runtime_error(path.string() + ": depth for '" + key + "' must be >= 1");
    }
  }
  return depths;
}

std::string metrics_report_text(const metrics::ConfusionMatrix& cm) {
  const auto report = metrics::iou_report(cm);
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "pixel accuracy: " << metrics::accuracy(cm) << "\n";
  out << "mean IoU:       " << report.mean << "\n";
  for (int c = 0; c < cm.n_classes(); ++c) {
    out << "  class " << c << " IoU: ";
    if (std::isnan(report.per_class[c])) {
      out << "absent\n";
    } else {
      out << report.per_class[c] << "\n";
    }
  }
  return out.str();
}

std::string metrics_report_json(const metrics::ConfusionMatrix& cm) {
  const auto report = metrics::iou_report(cm);
  json per_class = json::array();
  for (int c = 0; c < cm.n_classes(); ++c) {
    if (std::isnan(report.per_class[c])) {
      per_class.push_back(nullptr);
    } else {
      per_class.push_back(report.per_class[c]);
    }
  }
  json cm_json = json::array();
  for (int t = 0; t < cm.n_classes(); ++t) {
    json row = json::array();
    for (int p = 0; p < cm.n_classes(); ++p) row.push_back(cm.at(t, p));
    cm_json.push_back(row);
  }
  return json{{"accuracy", metrics::accuracy(cm)},
              {"miou", report.mean},
              {"per_class_iou", per_class},
              {"confusion_matrix", cm_json}}
      .dump(2);
}

}  // namespace pixelflow::io
