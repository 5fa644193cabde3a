// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pixelflow/fixed_point.hpp"

namespace pixelflow::ir {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::int64_t pixels() const { return std::int64_t(height) * width; }
  std::int64_t elements() const { return std::int64_t(channels) * pixels(); }
  std::string to_string() const;
  bool operator==(const Shape&) const = default;
};

enum class LayerKind {
  Input,
  Output,
  ConvBN,
  MaxPool,
  Upsample,
  SpatialPad,
  ChannelPad,
  Relu,
  Add,
};

std::string_view kind_name(LayerKind kind);

enum class PaddingMode { Same, Valid };

/// Merged convolution + batchnorm. Weights are stored as floats (already
/// BN-folded); quantization to weight_format happens when a layer is
/// prepared for fixed-point execution. Stride is always 1, kernels square.
struct ConvBNParams {
  int kernel = 3;
  int filters = 1;
  PaddingMode padding = PaddingMode::Same;
  fx::FxFormat weight_format;
  fx::FxFormat out_format;
  std::vector<float> weights;  // [filters][c_in][kernel][kernel], row-major
  std::vector<float> bias;     // [filters]
};

struct MaxPoolParams {
  int kernel = 2;  // k x k window, stride k
};

struct UpsampleParams {
  int kernel = 2;  // nearest-neighbor k x k replication
};

struct SpatialPadParams {
  int pad = 0;  // zero pixels appended in the lower and right directions
};

/// Resizes the channel dimension: zero channels appended when target exceeds
/// the input count, trailing channels dropped when it is smaller (skip paths
/// where the bottleneck narrows).
struct ChannelPadParams {
  int target_channels = 1;
};

using LayerParams = std::variant<std::monostate, ConvBNParams, MaxPoolParams,
                                 UpsampleParams, SpatialPadParams, ChannelPadParams>;

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  LayerParams params;
  std::string stage;  // builder annotation ("initial", "bottleneck1", ... , "final")

  const ConvBNParams& conv() const { return std::get<ConvBNParams>(params); }
  ConvBNParams& conv() { return std::get<ConvBNParams>(params); }
};

struct Edge {
  int from = -1;
  int to = -1;
  int to_port = 0;  // Add consumes port 0 (main path) and port 1 (skip path)
};

struct Diagnostic {
  int node = -1;
  std::string message;
};

/// Per-channel batchnorm parameters prior to folding.
struct BnParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> moving_mean;
  std::vector<float> moving_variance;
  float epsilon = 1e-3f;
};

/// Directed layer graph. Node ids are indices into `nodes`. After a
/// successful validate() the graph is frozen: shapes, output formats and
/// accumulator formats per node are cached and the structure must not change.
struct ModelGraph {
  std::string name;
  std::vector<LayerSpec> nodes;
  std::vector<Edge> edges;
  Shape input_shape{3, 240, 152};
  fx::FxFormat input_format;

  // Caches filled by validate()/infer_shapes().
  std::vector<Shape> out_shapes;
  std::vector<fx::FxFormat> out_formats;
  std::vector<std::optional<fx::AccFormat>> acc_formats;
  bool inferred = false;

  int add_node(LayerSpec spec, const std::vector<int>& inputs);
  std::vector<int> input_edges(int node) const;   // edge ids ordered by port
  std::vector<int> output_edges(int node) const;  // edge ids in creation order
  int input_node() const;
  int output_node() const;
  int find_node(std::string_view name) const;  // -1 if absent

  /// Topological order of node ids; throws std::runtime_error on a cycle.
  std::vector<int> topo_order() const;

  const Shape& shape_of(int node) const;
  const fx::FxFormat& format_of(int node) const;
};

/// Structural and shape validation. Returns an empty list iff the graph is
/// well formed; on success the graph's shape/format caches are populated.
/// With require_weights, convolution nodes lacking weight data are flagged.
std::vector<Diagnostic> validate(ModelGraph& graph, bool require_weights = false);

/// Folds batchnorm into convolution weights:
///   w' = w * gamma / sqrt(var + eps)
///   b' = (b - mean) * gamma / sqrt(var + eps) + beta
/// weights laid out [filters][c_in][k][k]; bn arrays sized per filter.
void fold_batchnorm(std::vector<float>& weights, std::vector<float>& bias,
                    int filters, const BnParams& bn);

/// Sum over ConvBN nodes of k^2 * c_in * filters + filters.
std::int64_t parameter_count(ModelGraph& graph);

/// Deterministic random weight init for every ConvBN node missing weights.
void attach_random_weights(ModelGraph& graph, std::uint64_t seed);

}  // namespace pixelflow::ir
