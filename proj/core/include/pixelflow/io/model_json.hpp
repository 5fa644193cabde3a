// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>

#include "pixelflow/enet.hpp"
#include "pixelflow/model_ir.hpp"

namespace pixelflow::io {

struct LoadedModel {
  ir::ModelGraph graph;
  std::filesystem::path weights_manifest;  // empty when the model names none
  std::map<std::string, float> bn_epsilons;
};

/// Loads a model description. Two forms:
///  - builder form: {"builder": {"filters": [f0..f5], "quant": {...}}, ...}
///  - explicit form: {"nodes": [...], "edges": [[from, to], ...], ...}
/// Shared top-level keys: name, input_shape, input_format, rounding
/// ("round_nearest_even"|"truncate"), overflow ("saturate"|"wrap"),
/// weights (manifest path relative to the model file).
LoadedModel load_model(const std::filesystem::path& path);

/// Writes a builder-form model description.
void save_builder_model(const std::filesystem::path& path, const std::string& name,
                        const ir::EnetFilters& filters, const ir::Shape& input_shape,
                        const ir::QuantConfig& quant, int n_classes,
                        const std::string& weights_manifest);

}  // namespace pixelflow::io
