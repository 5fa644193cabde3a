// SPDX-License-Identifier: Apache-2.0
//
// pixelflow: compile an ENet-style quantized CNN to a streaming dataflow
// pipeline, simulate it cycle-by-cycle, size its FIFOs, and estimate
// hardware resources and latency.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pixelflow/cost_model.hpp"
#include "pixelflow/dataflow_sim.hpp"
#include "pixelflow/enet.hpp"
#include "pixelflow/io/image.hpp"
#include "pixelflow/io/model_json.hpp"
#include "pixelflow/io/reports.hpp"
#include "pixelflow/io/weights.hpp"
#include "pixelflow/reference.hpp"
#include "pixelflow/seg_metrics.hpp"

namespace fs = std::filesystem;
using namespace pixelflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitSimulation = 3;

struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SimulationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelOptions {
  std::string model_path;
  std::string weights_path;  // overrides the manifest named in the model file
  std::uint64_t seed = 1;    // random weights when no bundle is available
};

void add_model_options(CLI::App* cmd, ModelOptions& opts) {
  cmd->add_option("--model", opts.model_path, "model description JSON")->required();
  cmd->add_option("--weights", opts.weights_path,
                  "weights manifest (overrides the model file's entry)");
  cmd->add_option("--seed", opts.seed,
                  "seed for deterministic random weights when no bundle is given");
}

ir::ModelGraph load_graph(const ModelOptions& opts, bool need_weights) {
  io::LoadedModel model = io::load_model(opts.model_path);
  const auto diags = ir::validate(model.graph);
  if (!diags.empty()) {
    std::string msg = "model validation failed:";
    for (const auto& d : diags) {
      msg += "\n  ";
      if (d.node >= 0) msg += "[" + model.graph.nodes[d.node].name + "] ";
      msg += d.message;
    }
    throw ValidationFailure(msg);
  }
  if (!need_weights) return std::move(model.graph);

  fs::path manifest = model.weights_manifest;
  if (!opts.weights_path.empty()) manifest = opts.weights_path;
  if (!manifest.empty()) {
    io::attach_weights(model.graph, io::load_weights(manifest), model.bn_epsilons);
  } else {
    ir::attach_random_weights(model.graph, opts.seed);
    std::cerr << "note: no weights bundle; using seeded random weights (seed "
              << opts.seed << ")\n";
  }
  return std::move(model.graph);
}

std::vector<fx::FxTensor> load_inputs(ir::ModelGraph& graph,
                                      const std::vector<std::string>& image_paths) {
  std::vector<fx::FxTensor> inputs;
  for (const auto& p : image_paths) {
    const auto raw = io::load_image(p);
    if (raw.channels != graph.input_shape.channels ||
        raw.height != graph.input_shape.height || raw.width != graph.input_shape.width) {
      throw ValidationFailure(p + ": image is " +
                              ir::Shape{raw.channels, raw.height, raw.width}.to_string() +
                              ", model expects " + graph.input_shape.to_string());
    }
    inputs.push_back(io::preprocess(raw, graph.input_format));
  }
  return inputs;
}

void write_logits(const fs::path& stem, const fx::FxTensor& t) {
  std::ofstream bin(stem.string() + ".logits.bin", std::ios::binary);
  for (const auto m : t.data) {
    const float v = float(std::ldexp(double(m), -t.format.frac_bits()));
    bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  const nlohmann::json sidecar = {{"shape", {t.channels, t.height, t.width}},
                                  {"dtype", "float32"},
                                  {"format", t.format.to_string()}};
  std::ofstream(stem.string() + ".logits.json") << sidecar.dump(2) << "\n";
}

void write_float_logits(const fs::path& stem, const ref::FloatTensor& t) {
  std::ofstream bin(stem.string() + ".logits.bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(float)));
  const nlohmann::json sidecar = {
      {"shape", {t.shape.channels, t.shape.height, t.shape.width}},
      {"dtype", "float32"},
      {"format", "float"}};
  std::ofstream(stem.string() + ".logits.json") << sidecar.dump(2) << "\n";
}

metrics::LabelMap decode_float(const ref::FloatTensor& t) {
  metrics::LabelMap map(t.shape.height, t.shape.width);
  for (int y = 0; y < t.shape.height; ++y) {
    for (int x = 0; x < t.shape.width; ++x) {
      int best = 0;
      for (int c = 1; c < t.shape.channels; ++c) {
        if (t.at(c, y, x) > t.at(best, y, x)) best = c;
      }
      map.at(y, x) = std::uint8_t(best);
    }
  }
  return map;
}

ref::FloatTensor to_float_input(const fx::FxTensor& t) {
  ref::FloatTensor f{{t.channels, t.height, t.width}, {}};
  f.data.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    f.data[i] = float(std::ldexp(double(t.data[i]), -t.format.frac_bits()));
  }
  return f;
}

sim::SimResult run_stream_or_throw(ir::ModelGraph& graph,
                                   const std::vector<fx::FxTensor>& inputs,
                                   const sim::SimConfig& cfg) {
  const auto result = sim::simulate(graph, inputs, cfg);
  if (result.status != sim::SimStatus::Completed) {
    throw SimulationFailure("simulation failed (" +
                            std::string(sim::status_name(result.status)) + ")\n" +
                            result.diagnostic);
  }
  return result;
}

std::vector<fx::FxTensor> synthetic_batch(ir::ModelGraph& graph, int batch) {
  // The pipeline schedule is data-independent, so resource/latency probes
  // may run on zero images.
  fx::FxTensor img(graph.input_shape.channels, graph.input_shape.height,
                   graph.input_shape.width, graph.input_format);
  return std::vector<fx::FxTensor>(std::size_t(batch), img);
}

int cmd_build(const ModelOptions& opts, bool with_weights) {
  auto graph = load_graph(opts, with_weights);
  const auto stages = ir::stage_table(graph);
  std::cout << "model: " << graph.name << "\n";
  std::cout << "input: " << graph.input_shape.to_string() << " in "
            << graph.input_format.to_string() << "\n\n";
  std::cout << io::shape_table_text(stages, ir::parameter_count(graph));
  std::cout << "nodes: " << graph.nodes.size() << ", edges: " << graph.edges.size()
            << "\n";
  return kExitOk;
}

int cmd_run(const ModelOptions& opts, const std::string& mode,
            const std::vector<std::string>& images, const std::string& out_dir,
            int rf, const std::string& depths_path, bool save_logits) {
  auto graph = load_graph(opts, true);
  auto inputs = load_inputs(graph, images);
  fs::create_directories(out_dir);

  std::vector<metrics::LabelMap> preds;
  if (mode == "float") {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto logits = ref::run_float(graph, to_float_input(inputs[i]));
      preds.push_back(decode_float(logits));
      if (save_logits) {
        write_float_logits(fs::path(out_dir) / fs::path(images[i]).stem(), logits);
      }
    }
  } else if (mode == "fixed-seq") {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto logits = ref::run_fixed(graph, inputs[i]);
      preds.push_back(metrics::decode(logits));
      if (save_logits) {
        write_logits(fs::path(out_dir) / fs::path(images[i]).stem(), logits);
      }
    }
    std::cout << "quantization error bound vs float: "
              << ref::quantization_error_bound(graph) << "\n";
  } else if (mode == "fixed-stream") {
    sim::SimConfig cfg;
    cfg.reuse_factor = rf;
    if (!depths_path.empty()) cfg.fifo_depths = io::load_depth_map(graph, depths_path);
    const auto result = run_stream_or_throw(graph, inputs, cfg);
    for (std::size_t i = 0; i < result.outputs.size(); ++i) {
      preds.push_back(metrics::decode(result.outputs[i]));
      if (save_logits) {
        write_logits(fs::path(out_dir) / fs::path(images[i]).stem(), result.outputs[i]);
      }
    }
    std::cout << "makespan: " << result.makespan_cycles << " cycles (batch "
              << inputs.size() << ", RF " << rf << ")\n";
    std::cout << "quantization error bound vs float: "
              << ref::quantization_error_bound(graph) << "\n";
  } else {
    throw ValidationFailure("unknown mode '" + mode + "'");
  }

  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto path =
        fs::path(out_dir) / (fs::path(images[i]).stem().string() + ".pred.pgm");
    io::write_pgm(path, preds[i]);
    std::cout << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_profile_fifos(const ModelOptions& opts, const std::vector<std::string>& images,
                      int rf, const std::string& out_path) {
  auto graph = load_graph(opts, true);
  auto inputs = images.empty() ? synthetic_batch(graph, 1) : load_inputs(graph, images);
  sim::SimConfig cfg;
  cfg.reuse_factor = rf;
  cfg.fifo_depths = sim::baseline_depths(graph);
  const auto result = run_stream_or_throw(graph, inputs, cfg);

  const auto csv = io::occupancy_csv(result.traces);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream(out_path) << csv;
    std::cout << "wrote " << out_path << "\n";
  }
  const auto summary = io::summarize_occupancy(result.traces);
  std::cout << "makespan: " << result.makespan_cycles << " cycles\n";
  std::cout << "memory efficiency (sum O_l / sum F_l): "
            << summary.memory_efficiency * 100.0 << "%\n";
  std::cout << "mean occupancy (mean O_l / F_l):       "
            << summary.mean_occupancy * 100.0 << "%\n";
  return kExitOk;
}

int cmd_optimize_fifos(const ModelOptions& opts, const std::vector<std::string>& images,
                       double margin, int rf, const std::string& out_path) {
  auto graph = load_graph(opts, true);
  auto inputs = images.empty() ? synthetic_batch(graph, 3) : load_inputs(graph, images);
  sim::SimConfig cfg;
  cfg.reuse_factor = rf;
  std::vector<int> depths;
  try {
    depths = sim::optimize_fifo_depths(graph, inputs, margin, cfg);
  } catch (const std::runtime_error& e) {
    throw SimulationFailure(e.what());
  }

  const auto json_text = io::depth_map_json(graph, depths);
  if (out_path.empty()) {
    std::cout << json_text << "\n";
  } else {
    std::ofstream(out_path) << json_text << "\n";
    std::cout << "wrote " << out_path << "\n";
  }
  const auto baseline = sim::baseline_depths(graph);
  const auto sum = [](const std::vector<int>& v) {
    return std::accumulate(v.begin(), v.end(), std::int64_t{0});
  };
  std::cout << "total depth: " << sum(baseline) << " -> " << sum(depths) << " elements\n";
  return kExitOk;
}

int cmd_estimate(const ModelOptions& opts, int rf, double clock_ns, int batch,
                 const std::string& impl_name, const std::string& depths_path,
                 const std::vector<std::string>& images, bool as_json) {
  auto graph = load_graph(opts, true);
  const auto impl = impl_name == "encoded" ? cost::ConvImpl::Encoded
                                           : cost::ConvImpl::LineBuffer;
  sim::SimConfig cfg;
  cfg.reuse_factor = rf;
  cfg.conv_impl = impl_name == "encoded" ? sim::ConvImpl::Encoded
                                         : sim::ConvImpl::LineBuffer;
  if (!depths_path.empty()) cfg.fifo_depths = io::load_depth_map(graph, depths_path);
  auto inputs = images.empty() ? synthetic_batch(graph, batch) : load_inputs(graph, images);
  const auto result = run_stream_or_throw(graph, inputs, cfg);

  const auto depths =
      cfg.fifo_depths.empty() ? sim::baseline_depths(graph) : cfg.fifo_depths;
  const auto [res, lat] = cost::estimate(graph, depths, impl, rf, clock_ns,
                                         int(inputs.size()), result.makespan_cycles);
  std::cout << (as_json ? io::resource_report_json(res, lat)
                        : io::resource_report_text(res, lat));
  if (as_json) std::cout << "\n";
  return kExitOk;
}

int cmd_evaluate(const ModelOptions& opts, const std::vector<std::string>& images,
                 const std::string& truth_dir, const std::string& mode,
                 const std::string& json_out) {
  auto graph = load_graph(opts, true);
  auto inputs = load_inputs(graph, images);
  const int n_classes = graph.shape_of(graph.output_node()).channels;
  metrics::ConfusionMatrix cm(n_classes);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    metrics::LabelMap pred;
    if (mode == "float") {
      pred = decode_float(ref::run_float(graph, to_float_input(inputs[i])));
    } else if (mode == "fixed-seq") {
      pred = metrics::decode(ref::run_fixed(graph, inputs[i]));
    } else if (mode == "fixed-stream") {
      const auto result = run_stream_or_throw(graph, {inputs[i]}, {});
      pred = metrics::decode(result.outputs[0]);
    } else {
      throw ValidationFailure("unknown mode '" + mode + "'");
    }
    const auto truth_path =
        fs::path(truth_dir) / (fs::path(images[i]).stem().string() + ".pgm");
    const auto truth = io::read_pgm(truth_path);
    cm.accumulate(truth, pred);
  }

  std::cout << "images: " << images.size() << ", classes: " << n_classes << "\n";
  std::cout << io::metrics_report_text(cm);
  if (!json_out.empty()) {
    std::ofstream(json_out) << io::metrics_report_json(cm) << "\n";
    std::cout << "wrote " << json_out << "\n";
  }
  return kExitOk;
}

int cmd_compare_impl(const ModelOptions& opts, const std::vector<std::string>& images,
                     int rf) {
  auto graph = load_graph(opts, true);
  auto inputs = images.empty() ? synthetic_batch(graph, 1) : load_inputs(graph, images);

  sim::SimConfig line_cfg, enc_cfg;
  line_cfg.reuse_factor = enc_cfg.reuse_factor = rf;
  line_cfg.conv_impl = sim::ConvImpl::LineBuffer;
  enc_cfg.conv_impl = sim::ConvImpl::Encoded;
  const auto line = run_stream_or_throw(graph, inputs, line_cfg);
  const auto enc = run_stream_or_throw(graph, inputs, enc_cfg);

  bool identical = line.outputs.size() == enc.outputs.size();
  for (std::size_t i = 0; identical && i < line.outputs.size(); ++i) {
    identical = line.outputs[i].data == enc.outputs[i].data;
  }

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Layer", "K", "StreamW", "LineElems", "EncodedElems", "Saving"});
  std::int64_t line_total = 0, enc_total = 0;
  for (int n : graph.topo_order()) {
    const auto& spec = graph.nodes[n];
    if (spec.kind != ir::LayerKind::ConvBN) continue;
    const auto& p = spec.conv();
    const auto in_shape = graph.shape_of(graph.edges[graph.input_edges(n)[0]].from);
    const int stream_w = p.padding == ir::PaddingMode::Same ? in_shape.width + p.kernel - 1
                                                            : in_shape.width;
    const auto le = cost::buffer_elements(cost::ConvImpl::LineBuffer, p.kernel, stream_w);
    const auto ee = cost::buffer_elements(cost::ConvImpl::Encoded, p.kernel, stream_w);
    line_total += le;
    enc_total += ee;
    std::ostringstream saving;
    if (ee > 0) {
      saving << std::fixed << std::setprecision(1)
             << (100.0 * double(ee - le) / double(ee)) << "%";
    } else {
      saving << "-";
    }
    rows.push_back({spec.name, std::to_string(p.kernel), std::to_string(stream_w),
                    std::to_string(le), std::to_string(ee), saving.str()});
  }
  rows.push_back({"TOTAL", "", "", std::to_string(line_total), std::to_string(enc_total),
                  ""});
  std::cout << io::format_table(rows);
  std::cout << "window storage elements: line buffer " << line_total << ", encoded "
            << enc_total << "\n";
  std::cout << "outputs identical: " << (identical ? "yes" : "NO") << "\n";
  std::cout << "makespan: line " << line.makespan_cycles << ", encoded "
            << enc.makespan_cycles << " cycles\n";
  if (!identical) {
    throw SimulationFailure("line-buffer and encoded outputs diverged");
  }
  return kExitOk;
}

int cmd_make_demo(const std::string& dir, bool full) {
  fs::create_directories(dir);
  const fs::path base(dir);

  const ir::EnetFilters filters =
      full ? ir::EnetFilters{32, 8, 8, 8, 8, 8} : ir::EnetFilters{4, 2, 2, 2, 2, 2};
  const ir::Shape shape = full ? ir::Shape{3, 240, 152} : ir::Shape{3, 16, 16};
  ir::QuantConfig quant;

  io::save_builder_model(base / "model.json", full ? "enet8" : "enet-tiny", filters,
                         shape, quant, 4, "weights.json");
  auto graph = ir::build_enet(filters, shape, quant, 4);
  ir::attach_random_weights(graph, 2024);
  io::save_weights(base / "weights.json", io::collect_weights(graph));

  // A few synthetic images plus quadrant truth maps.
  std::mt19937_64 rng(7);
  for (int i = 0; i < 3; ++i) {
    io::RawImage img;
    img.channels = 3;
    img.height = shape.height;
    img.width = shape.width;
    img.data.resize(std::size_t(3) * shape.height * shape.width);
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        img.at(0, y, x) = std::uint8_t((x * 255) / shape.width);
        img.at(1, y, x) = std::uint8_t((y * 255) / shape.height);
        img.at(2, y, x) = std::uint8_t(rng() % 256);
      }
    }
    io::write_ppm(base / ("img" + std::to_string(i) + ".ppm"), img);

    metrics::LabelMap truth(shape.height, shape.width);
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        truth.at(y, x) = std::uint8_t((y < shape.height / 2 ? 0 : 2) +
                                      (x < shape.width / 2 ? 0 : 1));
      }
    }
    io::write_pgm(base / ("img" + std::to_string(i) + ".pgm"), truth);
  }
  std::cout << "wrote demo model, weights and images under " << dir << "\n";
  std::cout << "try: pixelflow build --model " << (base / "model.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming dataflow compiler/simulator for quantized segmentation CNNs"};
  app.require_subcommand(1);

  ModelOptions opts;
  std::vector<std::string> images;
  std::string mode = "fixed-seq";
  std::string out_dir = ".";
  std::string out_path;
  std::string depths_path;
  std::string truth_dir;
  std::string impl_name = "line";
  std::string json_out;
  double margin = 1.0;
  double clock_ns = 7.0;
  int rf = 1;
  int batch = 1;
  bool save_logits = false;
  bool as_json = false;
  bool full_demo = false;
  std::string demo_dir = "demo";

  auto* build = app.add_subcommand("build", "validate a model and print its shape table");
  add_model_options(build, opts);

  auto* run = app.add_subcommand("run", "run inference on images");
  add_model_options(run, opts);
  run->add_option("--mode", mode, "float | fixed-seq | fixed-stream")
      ->check(CLI::IsMember({"float", "fixed-seq", "fixed-stream"}));
  run->add_option("--images", images, "input images (.ppm or .bin+.json)")->required();
  run->add_option("--out", out_dir, "output directory (default .)");
  run->add_option("--rf", rf, "reuse factor (fixed-stream)")->check(CLI::PositiveNumber);
  run->add_option("--depths", depths_path, "FIFO depth map JSON (fixed-stream)");
  run->add_flag("--save-logits", save_logits, "also write logits tensors");

  auto* profile = app.add_subcommand("profile-fifos",
                                     "simulate with safety-default FIFO depths and "
                                     "export the occupancy trace CSV");
  add_model_options(profile, opts);
  profile->add_option("--images", images, "calibration images (default: one zero image)");
  profile->add_option("--rf", rf, "reuse factor")->check(CLI::PositiveNumber);
  profile->add_option("--out", out_path, "CSV path (default stdout)");

  auto* optimize = app.add_subcommand("optimize-fifos",
                                      "profile occupancy and emit an optimized "
                                      "FIFO depth map");
  add_model_options(optimize, opts);
  optimize->add_option("--images", images,
                       "calibration images (default: three zero images)");
  optimize->add_option("--margin", margin, "safety factor applied to observed depths")
      ->check(CLI::PositiveNumber);
  optimize->add_option("--rf", rf, "reuse factor")->check(CLI::PositiveNumber);
  optimize->add_option("--out", out_path, "depth map JSON path (default stdout)");

  auto* estimate = app.add_subcommand("estimate", "resource and latency report");
  add_model_options(estimate, opts);
  estimate->add_option("--rf", rf, "reuse factor")->check(CLI::PositiveNumber);
  estimate->add_option("--clock-ns", clock_ns, "clock period in ns")
      ->check(CLI::PositiveNumber);
  estimate->add_option("--batch", batch, "batch size (ignored when --images is given)")
      ->check(CLI::PositiveNumber);
  estimate->add_option("--impl", impl_name, "conv window implementation")
      ->check(CLI::IsMember({"line", "encoded"}));
  estimate->add_option("--depths", depths_path, "FIFO depth map JSON");
  estimate->add_option("--images", images, "images (default: zero batch)");
  estimate->add_flag("--json", as_json, "emit JSON instead of a table");

  auto* evaluate = app.add_subcommand("evaluate", "accuracy / mIoU over an image set");
  add_model_options(evaluate, opts);
  evaluate->add_option("--images", images, "input images")->required();
  evaluate->add_option("--truth", truth_dir, "directory of <stem>.pgm truth maps")
      ->required();
  evaluate->add_option("--mode", mode, "float | fixed-seq | fixed-stream")
      ->check(CLI::IsMember({"float", "fixed-seq", "fixed-stream"}));
  evaluate->add_option("--json", json_out, "also write a JSON report to this path");

  auto* compare = app.add_subcommand("compare-impl",
                                     "differential line-buffer vs encoded run plus "
                                     "window storage table");
  add_model_options(compare, opts);
  compare->add_option("--images", images, "images (default: one zero image)");
  compare->add_option("--rf", rf, "reuse factor")->check(CLI::PositiveNumber);

  auto* demo = app.add_subcommand("make-demo", "write a small self-contained demo set");
  demo->add_option("--dir", demo_dir, "output directory (default ./demo)");
  demo->add_flag("--full", full_demo, "full-resolution eight-filter model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (build->parsed()) return cmd_build(opts, false);
    if (run->parsed()) {
      return cmd_run(opts, mode, images, out_dir, rf, depths_path, save_logits);
    }
    if (profile->parsed()) return cmd_profile_fifos(opts, images, rf, out_path);
    if (optimize->parsed()) {
      return cmd_optimize_fifos(opts, images, margin, rf, out_path);
    }
    if (estimate->parsed()) {
      return cmd_estimate(opts, rf, clock_ns, batch, impl_name, depths_path, images,
                          as_json);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(opts, images, truth_dir, mode, json_out);
    }
    if (compare->parsed()) return cmd_compare_impl(opts, images, rf);
    if (demo->parsed()) return cmd_make_demo(demo_dir, full_demo);
  } catch (const SimulationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSimulation;
  } catch (const ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
