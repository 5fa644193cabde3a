// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "pixelflow/fixed_point.hpp"
#include "pixelflow/seg_metrics.hpp"

namespace pixelflow::io {

/// 8-bit image, channel-major (CHW).
struct RawImage {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int c, int y, int x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  std::uint8_t& at(int c, int y, int x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
};

/// Binary PPM (P6). Comments and arbitrary whitespace in the header are accepted.
RawImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RawImage& image);

/// Binary PGM (P5); pixel values are class indices.
metrics::LabelMap read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const metrics::LabelMap& map);

/// Loads .ppm/.pgm directly, or raw .bin with a JSON sidecar
/// (<file>.json: {"shape": [c, h, w], "dtype": "uint8"}).
RawImage load_image(const std::filesystem::path& path);

/// Pixel value v maps to v/256, exactly representable when the format has
/// at least 8 fractional bits (mantissa == v for u8.0).
fx::FxTensor preprocess(const RawImage& image, const fx::FxFormat& input_format);

}  // namespace pixelflow::io
