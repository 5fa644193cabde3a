// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pixelflow/model_ir.hpp"

namespace pixelflow::io {

struct Blob {
  std::vector<std::int64_t> shape;
  std::vector<float> data;  // row-major

  std::int64_t element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

/// Named float32 blobs backed by one little-endian payload file plus a JSON
/// manifest mapping blob name to shape and byte offset.
struct WeightsBundle {
  std::map<std::string, Blob> blobs;

  bool has(const std::string& name) const { return blobs.count(name) != 0; }
  const Blob& get(const std::string& name) const;
};

WeightsBundle load_weights(const std::filesystem::path& manifest_path);

/// Writes `<stem>.json` manifest plus `<stem>.bin` payload.
void save_weights(const std::filesystem::path& manifest_path, const WeightsBundle& bundle);

/// Binds bundle blobs onto ConvBN nodes by name: "<node>.w" ([f, c_in, k, k])
/// and optional "<node>.b" ([f]). When "<node>.bn.gamma/beta/mean/variance"
/// blobs are present, batchnorm is folded into the weights at load time
/// (epsilon from the node's bn_epsilon entry, stored on the graph via
/// model JSON, default 1e-3).
void attach_weights(ir::ModelGraph& graph, const WeightsBundle& bundle,
                    const std::map<std::string, float>& bn_epsilons = {});

/// Collects every ConvBN node's current float weights into a bundle
/// (inverse of attach_weights for already-folded graphs).
WeightsBundle collect_weights(const ir::ModelGraph& graph);

}  // namespace pixelflow::io
