// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/dataflow_sim.hpp"

#include <cmath>
#include <deque>
#include <memory>
#include <sstream>

#include "pixelflow/stream_kernels.hpp"

namespace pixelflow::sim {

using stream::Pixel;

namespace {

struct Fifo {
  int capacity = 1;
  std::deque<Pixel> q;
  std::int64_t max_occupancy = 0;
  double occupancy_sum = 0.0;

  bool can_push() const { return int(q.size()) < capacity; }
  bool empty() const { return q.empty(); }
  void push(Pixel p) {
    if (!can_push()) throw std::logic_error("Fifo: push beyond capacity");
    q.push_back(std::move(p));
    max_occupancy = std::max(max_occupancy, std::int64_t(q.size()));
  }
  const Pixel& front() const { return q.front(); }
  Pixel pop() {
    Pixel p = std::move(q.front());
    q.pop_front();
    return p;
  }
};

class Process {
 public:
  Process(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs)
      : name_(std::move(name)), ins_(std::move(ins)), outs_(std::move(outs)) {}
  virtual ~Process() = default;

  /// One cycle; returns true if the process advanced.
  virtual bool tick() = 0;
  virtual std::string state() const { return "idle"; }
  const std::string& name() const { return name_; }

 protected:
  bool outs_can_push() const {
    for (const Fifo* f : outs_) {
      if (!f->can_push()) return false;
    }
    return true;
  }
  void push_all(const Pixel& p) {
    for (Fifo* f : outs_) f->push(p);
  }

  std::string name_;
  std::vector<Fifo*> ins_;
  std::vector<Fifo*> outs_;
};

class SourceProcess final : public Process {
 public:
  SourceProcess(std::string name, std::vector<Fifo*> outs,
                const std::vector<fx::FxTensor>* images)
      : Process(std::move(name), {}, std::move(outs)), images_(images) {}

  bool tick() override {
    if (image_ >= int(images_->size())) return false;
    if (!outs_can_push()) return false;
    const fx::FxTensor& img = (*images_)[image_];
    const int y = int(pixel_ / img.width);
    const int x = int(pixel_ % img.width);
    Pixel p(img.channels);
    for (int c = 0; c < img.channels; ++c) p[c] = img.at(c, y, x);
    push_all(p);
    if (++pixel_ == img.size() / img.channels) {
      pixel_ = 0;
      ++image_;
    }
    return true;
  }

  std::string state() const override {
    return "image " + std::to_string(image_) + " pixel " + std::to_string(pixel_);
  }

 private:
  const std::vector<fx::FxTensor>* images_;
  int image_ = 0;
  std::int64_t pixel_ = 0;
};

class SinkProcess final : public Process {
 public:
  SinkProcess(std::string name, std::vector<Fifo*> ins, ir::Shape shape,
              fx::FxFormat format, int batch)
      : Process(std::move(name), std::move(ins), {}),
        shape_(shape), format_(format), batch_(batch) {
    current_ = fx::FxTensor(shape_.channels, shape_.height, shape_.width, format_);
  }

  bool tick() override {
    if (finished()) return false;
    if (ins_[0]->empty()) return false;
    const Pixel p = ins_[0]->pop();
    const int y = int(pixel_ / shape_.width);
    const int x = int(pixel_ % shape_.width);
    for (int c = 0; c < shape_.channels; ++c) current_.at(c, y, x) = p[c];
    if (++pixel_ == shape_.pixels()) {
      outputs.push_back(std::move(current_));
      current_ = fx::FxTensor(shape_.channels, shape_.height, shape_.width, format_);
      pixel_ = 0;
    }
    return true;
  }

  bool finished() const { return int(outputs.size()) >= batch_; }

  std::string state() const override {
    return "collected " + std::to_string(outputs.size()) + "/" + std::to_string(batch_) +
           " images, pixel " + std::to_string(pixel_);
  }

  std::vector<fx::FxTensor> outputs;

 private:
  ir::Shape shape_;
  fx::FxFormat format_;
  int batch_;
  fx::FxTensor current_;
  std::int64_t pixel_ = 0;
};

// Same-padding convolution: a zero-border injector feeds a window generator
// (line buffer or the legacy encoded scheme); every populated window is
// MAC-reduced and requantized. Multiplier sharing stalls the process
// reuse_factor - 1 extra cycles per produced output.
class ConvProcess final : public Process {
 public:
  ConvProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
              const ir::ConvBNParams& params, ir::Shape in_shape,
              const fx::FxFormat& in_format, int batch, int reuse_factor,
              ConvImpl impl)
      : Process(std::move(name), std::move(ins), std::move(outs)),
        prep_(stream::prepare_conv(params, in_shape.channels, in_format)),
        injector_(params.kernel, in_shape.height, in_shape.width, in_shape.channels),
        batch_(batch), rf_(reuse_factor), impl_(impl) {
    if (params.padding != ir::PaddingMode::Same) {
      throw std::invalid_argument("ConvProcess: streaming graphs use same padding");
    }
    const int ph = injector_.padded_height();
    const int pw = injector_.padded_width();
    if (impl_ == ConvImpl::LineBuffer) {
      line_ = std::make_unique<stream::LineBuffer>(params.kernel, ph, pw, in_shape.channels);
    } else {
      encoded_ = std::make_unique<stream::EncodedWindow>(params.kernel, ph, pw,
                                                         in_shape.channels);
    }
  }

  bool tick() override {
    if (stall_ > 0) {
      --stall_;
      return true;
    }
    if (image_ >= batch_) return false;
    const bool will_emit =
        line_ ? line_->next_step_emits() : encoded_->next_step_emits();
    if (will_emit && !outs_can_push()) return false;
    const bool needs_input = injector_.needs_input();
    if (needs_input && ins_[0]->empty()) return false;

    Pixel padded;
    if (needs_input) {
      const Pixel in = ins_[0]->pop();
      padded = injector_.step(&in);
    } else {
      padded = injector_.step(nullptr);
    }
    const auto window = line_ ? line_->step(padded) : encoded_->step(padded);
    if (window) {
      push_all(stream::conv_window(prep_, window->cells));
      stall_ = rf_ - 1;
    }
    if (injector_.done()) {
      injector_.reset();
      if (line_) line_->reset();
      if (encoded_) encoded_->reset();
      ++image_;
    }
    return true;
  }

  std::string state() const override {
    return "image " + std::to_string(image_) + ", stall " + std::to_string(stall_);
  }

  std::int64_t peak_window_storage() const {
    return line_ ? line_->peak_stored() : encoded_->peak_stored();
  }

 private:
  stream::PreparedConv prep_;
  stream::ZeroPadInjector injector_;
  std::unique_ptr<stream::LineBuffer> line_;
  std::unique_ptr<stream::EncodedWindow> encoded_;
  int batch_;
  int rf_;
  ConvImpl impl_;
  int image_ = 0;
  int stall_ = 0;
};

class PoolProcess final : public Process {
 public:
  PoolProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
              int kernel, ir::Shape in_shape, int batch)
      : Process(std::move(name), std::move(ins), std::move(outs)),
        pool_(kernel, in_shape.height, in_shape.width, in_shape.channels),
        pixels_per_image_(in_shape.pixels()), batch_(batch) {}

  bool tick() override {
    if (image_ >= batch_) return false;
    if (pool_.next_step_emits() && !outs_can_push()) return false;
    if (ins_[0]->empty()) return false;
    const auto out = pool_.step(ins_[0]->pop());
    if (out) push_all(*out);
    if (++consumed_ == pixels_per_image_) {
      consumed_ = 0;
      pool_.reset();
      ++image_;
    }
    return true;
  }

  std::string state() const override {
    return "image " + std::to_string(image_) + ", consumed " + std::to_string(consumed_);
  }

 private:
  stream::StreamPool pool_;
  std::int64_t pixels_per_image_;
  int batch_;
  int image_ = 0;
  std::int64_t consumed_ = 0;
};

class UpsampleProcess final : public Process {
 public:
  UpsampleProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
                  int kernel, ir::Shape in_shape, int batch)
      : Process(std::move(name), std::move(ins), std::move(outs)),
        up_(kernel, in_shape.height, in_shape.width, in_shape.channels), batch_(batch) {}

  bool tick() override {
    if (image_ >= batch_) return false;
    if (!outs_can_push()) return false;
    Pixel out;
    if (up_.needs_input()) {
      if (ins_[0]->empty()) return false;
      const Pixel in = ins_[0]->pop();
      out = up_.step(&in);
    } else {
      out = up_.step(nullptr);
    }
    push_all(out);
    if (up_.done()) {
      up_.reset();
      ++image_;
    }
    return true;
  }

 private:
  stream::StreamUpsample up_;
  int batch_;
  int image_ = 0;
};

class SpatialPadProcess final : public Process {
 public:
  SpatialPadProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
                    int pad, ir::Shape in_shape, int batch)
      : Process(std::move(name), std::move(ins), std::move(outs)),
        pad_(pad, in_shape.height, in_shape.width, in_shape.channels), batch_(batch) {}

  bool tick() override {
    if (image_ >= batch_) return false;
    if (!outs_can_push()) return false;
    Pixel out;
    if (pad_.needs_input()) {
      if (ins_[0]->empty()) return false;
      const Pixel in = ins_[0]->pop();
      out = pad_.step(&in);
    } else {
      out = pad_.step(nullptr);
    }
    push_all(out);
    if (pad_.done()) {
      pad_.reset();
      ++image_;
    }
    return true;
  }

 private:
  stream::SpatialPadStream pad_;
  int batch_;
  int image_ = 0;
};

class ReluProcess final : public Process {
 public:
  ReluProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
              fx::FxFormat format)
      : Process(std::move(name), std::move(ins), std::move(outs)), format_(format) {}

  bool tick() override {
    if (ins_[0]->empty() || !outs_can_push()) return false;
    push_all(stream::relu_step(ins_[0]->pop(), format_));
    return true;
  }

 private:
  fx::FxFormat format_;
};

class ChannelPadProcess final : public Process {
 public:
  ChannelPadProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
                    int target)
      : Process(std::move(name), std::move(ins), std::move(outs)), target_(target) {}

  bool tick() override {
    if (ins_[0]->empty() || !outs_can_push()) return false;
    push_all(stream::channel_pad_step(ins_[0]->pop(), target_));
    return true;
  }

 private:
  int target_;
};

// Blocking join: consumes one pixel from each operand stream per emission.
class AddProcess final : public Process {
 public:
  AddProcess(std::string name, std::vector<Fifo*> ins, std::vector<Fifo*> outs,
             fx::FxFormat fmt_a, fx::FxFormat fmt_b, fx::FxFormat out_fmt)
      : Process(std::move(name), std::move(ins), std::move(outs)),
        fmt_a_(fmt_a), fmt_b_(fmt_b), out_fmt_(out_fmt) {}

  bool tick() override {
    if (ins_[0]->empty() || ins_[1]->empty() || !outs_can_push()) return false;
    const Pixel a = ins_[0]->pop();
    const Pixel b = ins_[1]->pop();
    push_all(stream::add_step(a, b, fmt_a_, fmt_b_, out_fmt_));
    return true;
  }

 private:
  fx::FxFormat fmt_a_, fmt_b_, out_fmt_;
};

// Pass-through for Output nodes with a downstream consumer would go here;
// the single Output node is realized as the sink directly.

std::int64_t per_image_steps(ir::ModelGraph& g, int node, int rf) {
  const ir::LayerSpec& spec = g.nodes[node];
  const ir::Shape out = g.shape_of(node);
  switch (spec.kind) {
    case ir::LayerKind::ConvBN: {
      const int k = spec.conv().kernel;
      const ir::Shape in = g.shape_of(g.edges[g.input_edges(node)[0]].from);
      const std::int64_t padded =
          std::int64_t(in.height + k - 1) * (in.width + k - 1);
      return padded + out.pixels() * rf;
    }
    case ir::LayerKind::Input:
    case ir::LayerKind::Output:
      return out.pixels();
    case ir::LayerKind::MaxPool:
      return g.shape_of(g.edges[g.input_edges(node)[0]].from).pixels();
    default:
      return out.pixels();
  }
}

void require_ready(ir::ModelGraph& graph) {
  if (!graph.inferred) {
    const auto diags = ir::validate(graph, true);
    if (!diags.empty()) {
      throw std::runtime_error("simulate: invalid graph: " + diags.front().message);
    }
  }
}

}  // namespace

std::string_view status_name(SimStatus status) {
  switch (status) {
    case SimStatus::Completed: return "completed";
    case SimStatus::Deadlock: return "deadlock";
    case SimStatus::BudgetExhausted: return "budget_exhausted";
  }
  return "?";
}

std::vector<int> baseline_depths(ir::ModelGraph& graph) {
  require_ready(graph);
  std::vector<int> depths(graph.edges.size());
  for (int e = 0; e < int(graph.edges.size()); ++e) {
    depths[e] = int(graph.shape_of(graph.edges[e].from).pixels());
  }
  return depths;
}

SimResult simulate(ir::ModelGraph& graph, const std::vector<fx::FxTensor>& inputs,
                   const SimConfig& config) {
  require_ready(graph);
  if (inputs.empty()) throw std::invalid_argument("simulate: no input images");
  if (config.reuse_factor < 1) {
    throw std::invalid_argument("simulate: reuse_factor must be >= 1");
  }
  for (const auto& img : inputs) {
    if (img.channels != graph.input_shape.channels ||
        img.height != graph.input_shape.height || img.width != graph.input_shape.width) {
      throw std::invalid_argument("simulate: input image shape mismatch");
    }
    if (img.format.total_bits != graph.input_format.total_bits ||
        img.format.integer_bits != graph.input_format.integer_bits ||
        img.format.is_signed != graph.input_format.is_signed) {
      throw std::invalid_argument("simulate: input not quantized to the graph input format");
    }
  }

  std::vector<int> depths = config.fifo_depths;
  if (depths.empty()) {
    depths = baseline_depths(graph);
  } else if (depths.size() != graph.edges.size()) {
    throw std::invalid_argument("simulate: fifo_depths size does not match edge count");
  }
  for (int d : depths) {
    if (d < 1) throw std::invalid_argument("simulate: all FIFO depths must be >= 1");
  }

  const int batch = int(inputs.size());
  std::vector<Fifo> fifos(graph.edges.size());
  for (int e = 0; e < int(fifos.size()); ++e) fifos[e].capacity = depths[e];

  const auto in_fifos = [&](int node) {
    std::vector<Fifo*> v;
    for (int e : graph.input_edges(node)) v.push_back(&fifos[e]);
    return v;
  };
  const auto out_fifos = [&](int node) {
    std::vector<Fifo*> v;
    for (int e : graph.output_edges(node)) v.push_back(&fifos[e]);
    return v;
  };

  std::vector<std::unique_ptr<Process>> processes(graph.nodes.size());
  SinkProcess* sink = nullptr;
  for (int n = 0; n < int(graph.nodes.size()); ++n) {
    const ir::LayerSpec& spec = graph.nodes[n];
    const auto in_shape_of = [&](int port) {
      return graph.shape_of(graph.edges[graph.input_edges(n)[port]].from);
    };
    const auto in_format_of = [&](int port) {
      return graph.format_of(graph.edges[graph.input_edges(n)[port]].from);
    };
    switch (spec.kind) {
      case ir::LayerKind::Input:
        processes[n] =
            std::make_unique<SourceProcess>(spec.name, out_fifos(n), &inputs);
        break;
      case ir::LayerKind::Output: {
        auto s = std::make_unique<SinkProcess>(spec.name, in_fifos(n), in_shape_of(0),
                                               in_format_of(0), batch);
        sink = s.get();
        processes[n] = std::move(s);
        break;
      }
      case ir::LayerKind::ConvBN:
        processes[n] = std::make_unique<ConvProcess>(
            spec.name, in_fifos(n), out_fifos(n), spec.conv(), in_shape_of(0),
            in_format_of(0), batch, config.reuse_factor, config.conv_impl);
        break;
      case ir::LayerKind::MaxPool:
        processes[n] = std::make_unique<PoolProcess>(
            spec.name, in_fifos(n), out_fifos(n),
            std::get<ir::MaxPoolParams>(spec.params).kernel, in_shape_of(0), batch);
        break;
      case ir::LayerKind::Upsample:
        processes[n] = std::make_unique<UpsampleProcess>(
            spec.name, in_fifos(n), out_fifos(n),
            std::get<ir::UpsampleParams>(spec.params).kernel, in_shape_of(0), batch);
        break;
      case ir::LayerKind::SpatialPad:
        processes[n] = std::make_unique<SpatialPadProcess>(
            spec.name, in_fifos(n), out_fifos(n),
            std::get<ir::SpatialPadParams>(spec.params).pad, in_shape_of(0), batch);
        break;
      case ir::LayerKind::ChannelPad:
        processes[n] = std::make_unique<ChannelPadProcess>(
            spec.name, in_fifos(n), out_fifos(n),
            std::get<ir::ChannelPadParams>(spec.params).target_channels);
        break;
      case ir::LayerKind::Relu:
        processes[n] = std::make_unique<ReluProcess>(spec.name, in_fifos(n), out_fifos(n),
                                                     in_format_of(0));
        break;
      case ir::LayerKind::Add:
        processes[n] = std::make_unique<AddProcess>(spec.name, in_fifos(n), out_fifos(n),
                                                    in_format_of(0), in_format_of(1),
                                                    graph.format_of(n));
        break;
    }
  }

  std::int64_t budget = config.cycle_budget;
  if (budget <= 0) {
    std::int64_t work = 0;
    for (int n = 0; n < int(graph.nodes.size()); ++n) {
      work += per_image_steps(graph, n, config.reuse_factor);
    }
    budget = 10000 + 2 * work * batch;
  }

  const std::vector<int> order = graph.topo_order();
  SimResult result;
  std::int64_t cycle = 0;
  for (; cycle < budget; ++cycle) {
    bool progress = false;
    for (int n : order) progress |= processes[n]->tick();
    for (auto& f : fifos) f.occupancy_sum += double(f.q.size());
    if (sink->finished()) {
      result.status = SimStatus::Completed;
      ++cycle;
      break;
    }
    if (!progress) {
      result.status = SimStatus::Deadlock;
      break;
    }
  }
  if (cycle >= budget && !sink->finished()) result.status = SimStatus::BudgetExhausted;

  result.makespan_cycles = cycle;
  result.outputs = std::move(sink->outputs);
  const std::int64_t cycles_run = std::max<std::int64_t>(cycle, 1);
  result.traces.reserve(graph.edges.size());
  for (int e = 0; e < int(graph.edges.size()); ++e) {
    EdgeTrace t;
    t.edge = e;
    t.producer = graph.nodes[graph.edges[e].from].name;
    t.consumer = graph.nodes[graph.edges[e].to].name;
    t.capacity = fifos[e].capacity;
    t.max_occupancy = fifos[e].max_occupancy;
    t.mean_occupancy = fifos[e].occupancy_sum / double(cycles_run);
    result.traces.push_back(std::move(t));
  }

  if (result.status != SimStatus::Completed) {
    std::ostringstream dump;
    dump << "simulation " << status_name(result.status) << " at cycle " << cycle << "\n";
    dump << "fifo state (occupancy/capacity):\n";
    for (int e = 0; e < int(graph.edges.size()); ++e) {
      dump << "  " << result.traces[e].producer << " -> " << result.traces[e].consumer
           << ": " << fifos[e].q.size() << "/" << fifos[e].capacity << "\n";
    }
    dump << "process state:\n";
    for (int n : order) {
      dump << "  " << processes[n]->name() << ": " << processes[n]->state() << "\n";
    }
    result.diagnostic = dump.str();
  }
  return result;
}

std::int64_t makespan(ir::ModelGraph& graph, const std::vector<fx::FxTensor>& inputs,
                      const SimConfig& config) {
  const SimResult r = simulate(graph, inputs, config);
  if (r.status != SimStatus::Completed) {
    throw std::runtime_error("makespan: simulation did not complete: " +
                             std::string(status_name(r.status)) + "\n" + r.diagnostic);
  }
  return r.makespan_cycles;
}

std::vector<int> optimize_fifo_depths(ir::ModelGraph& graph,
                                      const std::vector<fx::FxTensor>& calibration,
                                      double margin, const SimConfig& config) {
  if (margin <= 0.0) {
    throw std::invalid_argument("optimize_fifo_depths: margin must be > 0");
  }
  SimConfig base = config;
  base.fifo_depths = baseline_depths(graph);
  const SimResult baseline = simulate(graph, calibration, base);
  if (baseline.status != SimStatus::Completed) {
    throw std::runtime_error("optimize_fifo_depths: baseline simulation failed: " +
                             std::string(status_name(baseline.status)) + "\n" +
                             baseline.diagnostic);
  }

  std::vector<int> depths(graph.edges.size());
  for (int e = 0; e < int(graph.edges.size()); ++e) {
    const auto observed = std::max<std::int64_t>(baseline.traces[e].max_occupancy, 1);
    depths[e] = int(std::ceil(double(observed) * margin));
  }

  SimConfig opt = config;
  opt.fifo_depths = depths;
  const SimResult rerun = simulate(graph, calibration, opt);
  if (rerun.status != SimStatus::Completed) {
    throw std::runtime_error("optimize_fifo_depths: optimized depths failed to complete: " +
                             std::string(status_name(rerun.status)) + "\n" + rerun.diagnostic);
  }
  if (rerun.outputs != baseline.outputs) {
    throw std::runtime_error("optimize_fifo_depths: optimized outputs diverged from baseline");
  }
  return depths;
}

}  // namespace pixelflow::sim
