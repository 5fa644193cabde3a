// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/io/image.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace pixelflow::io {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

struct PnmHeader {
  int width = 0, height = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::filesystem::path& path,
                          const char* magic) {
  if (next_token(in) != magic) fail(path, std::string("not a ") + magic + " file");
  PnmHeader h;
  try {
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    h.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    fail(path, "malformed header");
  }
  if (h.width < 1 || h.height < 1) fail(path, "bad dimensions");
  if (h.maxval < 1 || h.maxval > 255) fail(path, "only 8-bit maxval supported");
  return h;
}

}  // namespace

RawImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const PnmHeader h = read_pnm_header(in, path, "P6");
  RawImage img;
  img.channels = 3;
  img.height = h.height;
  img.width = h.width;
  img.data.resize(std::size_t(3) * h.height * h.width);
  std::vector<std::uint8_t> row(std::size_t(h.width) * 3);
  for (int y = 0; y < h.height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    if (!in) fail(path, "truncated pixel data");
    for (int x = 0; x < h.width; ++x) {
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[std::size_t(x) * 3 + c];
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels != 3) throw std::invalid_argument("write_ppm: image must have 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> row(std::size_t(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) row[std::size_t(x) * 3 + c] = image.at(c, y, x);
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!out) fail(path, "write failed");
}

metrics::LabelMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const PnmHeader h = read_pnm_header(in, path, "P5");
  metrics::LabelMap map(h.height, h.width);
  in.read(reinterpret_cast<char*>(map.labels.data()), std::streamsize(map.labels.size()));
  if (!in) fail(path, "truncated pixel data");
  return map;
}

void write_pgm(const std::filesystem::path& path, const metrics::LabelMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << map.width << " " << map.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(map.labels.data()),
            std::streamsize(map.labels.size()));
  if (!out) fail(path, "write failed");
}

RawImage load_image(const std::filesystem::path& path) {
  if (path.extension() == ".ppm") return read_ppm(path);
  if (path.extension() == ".bin") {
    std::filesystem::path sidecar = path;
    sidecar.replace_extension(".json");
    std::ifstream meta(sidecar);
    if (!meta) fail(sidecar, "missing sidecar for raw image");
    nlohmann::json j;
    try {
      meta >> j;
    } catch (const std::exception& e) {
      fail(sidecar, std::string("bad JSON: ") + e.what());
    }
    if (j.value("dtype", "uint8") != "uint8") fail(sidecar, "raw images must be uint8");
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) fail(sidecar, "shape must be [channels, height, width]");
    RawImage img;
    img.channels = shape[0];
    img.height = shape[1];
    img.width = shape[2];
    if (img.channels < 1 || img.height < 1 || img.width < 1) fail(sidecar, "bad shape");
    img.data.resize(std::size_t(img.channels) * img.height * img.width);
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
    if (!in || in.gcount() != std::streamsize(img.data.size())) {
      fail(path, "payload size does not match declared shape");
    }
    return img;
  }
  fail(path, "unsupported image extension (expected .ppm or .bin)");
}

fx::FxTensor preprocess(const RawImage& image, const fx::FxFormat& input_format) {
  input_format.validate();
  fx::FxTensor t(image.channels, image.height, image.width, input_format);
  const bool direct = !input_format.is_signed && input_format.frac_bits() == 8 &&
                      input_format.total_bits >= 8;
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    t.data[i] = direct ? std::int32_t(image.data[i])
                       : fx::quantize(double(image.data[i]) / 256.0, input_format).mantissa;
  }
  return t;
}

}  // namespace pixelflow::io
