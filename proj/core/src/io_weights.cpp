// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/io/weights.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace pixelflow::io {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

}  // namespace

const Blob& WeightsBundle::get(const std::string& name) const {
  const auto it = blobs.find(name);
  if (it == blobs.end()) {
    throw std::runtime_error("weights bundle has no blob '" + name + "'");
  }
  return it->second;
}

WeightsBundle load_weights(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(manifest_path, "cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(manifest_path, std::string("bad JSON: ") + e.what());
  }

  const auto payload_path =
      manifest_path.parent_path() / j.at("payload").get<std::string>();
  std::ifstream payload(payload_path, std::ios::binary | std::ios::ate);
  if (!payload) fail(payload_path, "cannot open payload");
  const std::int64_t payload_size = payload.tellg();

  struct Entry {
    std::string name;
    std::int64_t offset;
    std::int64_t bytes;
  };
  std::vector<Entry> entries;

  WeightsBundle bundle;
  for (const auto& [name, desc] : j.at("blobs").items()) {
    if (desc.value("dtype", "float32") != "float32") {
      fail(manifest_path, "blob '" + name + "': only float32 supported");
    }
    Blob blob;
    blob.shape = desc.at("shape").get<std::vector<std::int64_t>>();
    for (auto d : blob.shape) {
      if (d < 1) fail(manifest_path, "blob '" + name + "': non-positive dimension");
    }
    const std::int64_t offset = desc.at("offset").get<std::int64_t>();
    const std::int64_t bytes = blob.element_count() * std::int64_t(sizeof(float));
    if (offset < 0 || offset + bytes > payload_size) {
      fail(manifest_path, "blob '" + name + "' lies outside the payload file");
    }
    entries.push_back({name, offset, bytes});
    blob.data.resize(std::size_t(blob.element_count()));
    payload.seekg(offset);
    payload.read(reinterpret_cast<char*>(blob.data.data()), bytes);
    if (!payload) fail(payload_path, "short read for blob '" + name + "'");
    bundle.blobs.emplace(name, std::move(blob));
  }

  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.offset < b.offset; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i - 1].offset + entries[i - 1].bytes > entries[i].offset) {
      fail(manifest_path, "blobs '" + entries[i - 1].name + "' and '" + entries[i].name +
                              "' overlap");
    }
  }
  return bundle;
}

void save_weights(const std::filesystem::path& manifest_path, const WeightsBundle& bundle) {
  std::filesystem::path payload_path = manifest_path;
  payload_path.replace_extension(".bin");

  nlohmann::json blobs_json = nlohmann::json::object();
  std::ofstream payload(payload_path, std::ios::binary);
  if (!payload) fail(payload_path, "cannot open for writing");
  std::int64_t offset = 0;
  for (const auto& [name, blob] : bundle.blobs) {
    const std::int64_t bytes = blob.element_count() * std::int64_t(sizeof(float));
    payload.write(reinterpret_cast<const char*>(blob.data.data()), bytes);
    blobs_json[name] = {{"shape", blob.shape}, {"dtype", "float32"}, {"offset", offset}};
    offset += bytes;
  }
  if (!payload) fail(payload_path, "write failed");

  const nlohmann::json manifest = {{"payload", payload_path.filename().string()},
                                   {"blobs", blobs_json}};
  std::ofstream out(manifest_path);
  if (!out) fail(manifest_path, "cannot open for writing");
  out << manifest.dump(2) << "\n";
}

void attach_weights(ir::ModelGraph& graph, const WeightsBundle& bundle,
                    const std::map<std::string, float>& bn_epsilons) {
  auto diags = ir::validate(graph);
  if (!diags.empty()) {
    throw std::runtime_error("attach_weights: invalid graph: " + diags.front().message);
  }
  for (int n = 0; n < int(graph.nodes.size()); ++n) {
    ir::LayerSpec& spec = graph.nodes[n];
    if (spec.kind != ir::LayerKind::ConvBN) continue;
    auto& p = spec.conv();
    const int c_in = graph.shape_of(graph.edges[graph.input_edges(n)[0]].from).channels;

    const Blob& w = bundle.get(spec.name + ".w");
    const std::vector<std::int64_t> want{p.filters, c_in, p.kernel, p.kernel};
    if (w.shape != want) {
      throw std::runtime_error("attach_weights: blob '" + spec.name + ".w' shape mismatch");
    }
    p.weights = w.data;
    if (bundle.has(spec.name + ".b")) {
      const Blob& b = bundle.get(spec.name + ".b");
      if (b.shape != std::vector<std::int64_t>{p.filters}) {
        throw std::runtime_error("attach_weights: blob '" + spec.name + ".b' shape mismatch");
      }
      p.bias = b.data;
    } else {
      p.bias.assign(p.filters, 0.0f);
    }

    const std::string bn_prefix = spec.name + ".bn.";
    if (bundle.has(bn_prefix + "gamma")) {
      ir::BnParams bn;
      bn.gamma = bundle.get(bn_prefix + "gamma").data;
      bn.beta = bundle.get(bn_prefix + "beta").data;
      bn.moving_mean = bundle.get(bn_prefix + "mean").data;
      bn.moving_variance = bundle.get(bn_prefix + "variance").data;
      const auto it = bn_epsilons.find(spec.name);
      bn.epsilon = it != bn_epsilons.end() ? it->second : 1e-3f;
      ir::fold_batchnorm(p.weights, p.bias, p.filters, bn);
    }
  }
  graph.inferred = false;
  diags = ir::validate(graph, true);
  if (!diags.empty()) {
    throw std::runtime_error("attach_weights: " + diags.front().message);
  }
}

WeightsBundle collect_weights(const ir::ModelGraph& graph) {
  WeightsBundle bundle;
  for (int n = 0; n < int(graph.nodes.size()); ++n) {
    const ir::LayerSpec& spec = graph.nodes[n];
    if (spec.kind != ir::LayerKind::ConvBN) continue;
    const auto& p = spec.conv();
    if (p.weights.empty()) continue;
    const int kk = p.kernel * p.kernel;
    const auto c_in = std::int64_t(p.weights.size()) / (std::int64_t(p.filters) * kk);
    Blob w;
    w.shape = {p.filters, c_in, p.kernel, p.kernel};
    w.data = p.weights;
    bundle.blobs.emplace(spec.name + ".w", std::move(w));
    Blob b;
    b.shape = {p.filters};
    b.data = p.bias.empty() ? std::vector<float>(p.filters, 0.f) : p.bias;
    bundle.blobs.emplace(spec.name + ".b", std::move(b));
  }
  return bundle;
}

}  // namespace pixelflow::io
