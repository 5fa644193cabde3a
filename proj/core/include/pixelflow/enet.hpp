// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>

#include "pixelflow/model_ir.hpp"

namespace pixelflow::ir {

/// Weight/activation formats for one stage of the network.
struct StageFormats {
  fx::FxFormat weights;
  fx::FxFormat activations;
};

/// Quantization plan for the builder: a uniform base plus optional per-stage
/// overrides (stages: initial, bottleneck1..5, final), mirroring
/// heterogeneous per-block bit-width configurations.
struct QuantConfig {
  StageFormats base{fx::FxFormat::parse("s8.0"), fx::FxFormat::parse("u8.0")};
  fx::FxFormat input = fx::FxFormat::parse("u8.0");
  std::optional<fx::FxFormat> logits;  // default: signed twin of the final stage activation
  std::array<std::optional<StageFormats>, 7> stage_overrides{};  // [initial, b1..b5, final]

  static constexpr int kStages = 7;
  StageFormats stage(int index) const {
    return stage_overrides[index] ? *stage_overrides[index] : base;
  }
  fx::FxFormat logits_format() const;

  /// Applies one rounding/overflow policy pair to every format in the plan.
  void set_policies(fx::Rounding rounding, fx::Overflow overflow);
};

using EnetFilters = std::array<int, 6>;  // f0 .. f5

/// Builds the ENet-style graph: Initial, three downsample-encoder blocks,
/// two upsample-decoder blocks (three bottlenecks each, the first one
/// resampling), and the Final upsample head with n_classes output maps.
/// Input height and width must be divisible by 8.
ModelGraph build_enet(const EnetFilters& filters,
                      Shape input_shape = {3, 240, 152},
                      const QuantConfig& quant = {},
                      int n_classes = 4);

/// Stage summary row for shape tables.
struct StageInfo {
  std::string stage;
  std::string kind;  // "downsample", "upsample" or ""
  Shape output;
  std::int64_t parameters = 0;
};

/// Per-stage output resolutions and parameter counts, in network order.
/// Requires a validated graph with builder stage annotations.
std::vector<StageInfo> stage_table(ModelGraph& graph);

}  // namespace pixelflow::ir
