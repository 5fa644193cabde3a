// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "pixelflow/fixed_point.hpp"
#include "pixelflow/model_ir.hpp"

namespace pixelflow::stream {

/// One spatial position, all channels: the unit that flows between layer
/// processes and through window generators.
using Pixel = std::vector<std::int32_t>;

/// A fully populated K x K input window at a valid output position.
struct Window {
  int out_row = 0;
  int out_col = 0;
  std::vector<Pixel> cells;  // K*K, row-major, cells[0] is the oldest row

  bool operator==(const Window&) const = default;
};

/// Sliding-window generator built from a chain of K-1 shift registers of
/// depth W. Each step consumes exactly one pixel; popped register heads
/// cascade down the chain and form the rightmost window column together
/// with the incoming pixel. Emits a window at every valid output position.
class LineBuffer {
 public:
  LineBuffer(int kernel, int height, int width, int channels);

  /// Consumes one pixel. Throws std::logic_error past height*width pixels.
  std::optional<Window> step(const Pixel& pixel);

  /// True when the *next* step will emit a window (pure counter logic).
  bool next_step_emits() const;

  void reset();

  int kernel() const { return kernel_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::int64_t pixels_consumed() const { return consumed_; }
  /// Pixel-vectors currently held (registers + window slots).
  std::int64_t stored_pixels() const;

  std::int64_t peak_stored() const { return peak_stored_; }
  /// Hard bound the state never exceeds: (K-1)*W + K*K.
  std::int64_t storage_bound() const;

 private:
  int kernel_, height_, width_, channels_;
  std::vector<std::deque<Pixel>> registers_;  // K-1 rows of history
  std::vector<Pixel> window_;                 // K*K, row-major
  std::int64_t consumed_ = 0;
  std::int64_t peak_stored_ = 0;
};

/// Legacy window generator: K^2 buffers, one per window cell; every arriving
/// pixel is replicated into each cell buffer it will eventually occupy.
/// Emits the identical window sequence as LineBuffer on the same stream.
class EncodedWindow {
 public:
  EncodedWindow(int kernel, int height, int width, int channels);

  std::optional<Window> step(const Pixel& pixel);
  bool next_step_emits() const;
  void reset();

  std::int64_t pixels_consumed() const { return consumed_; }
  std::int64_t stored_pixels() const;
  std::int64_t peak_stored() const { return peak_stored_; }
  /// Allocation bound from the legacy scheme: K^2 buffers of depth K*(W-K+1).
  std::int64_t storage_bound() const;

 private:
  int kernel_, height_, width_, channels_;
  std::vector<std::deque<Pixel>> cells_;  // K*K buffers
  std::int64_t consumed_ = 0;
  std::int64_t peak_stored_ = 0;
};

/// Quantized convolution weights plus the derived accumulator layout,
/// shared by the streaming and the sequential evaluators so both produce
/// bit-identical results.
struct PreparedConv {
  int kernel = 1;
  int c_in = 1;
  int filters = 1;
  std::vector<std::int32_t> weight_mantissas;  // [f][c][ki][kj]
  std::vector<std::int64_t> bias_mantissas;    // aligned to src_frac
  fx::AccFormat acc;
  int src_frac = 0;
  fx::FxFormat out_format;

  std::int32_t weight_at(int f, int c, int ki, int kj) const {
    return weight_mantissas[((std::size_t(f) * c_in + c) * kernel + ki) * kernel + kj];
  }
};

PreparedConv prepare_conv(const ir::ConvBNParams& conv, int c_in,
                          const fx::FxFormat& activation_format);

/// MAC-and-requantize over one populated window; returns one output pixel
/// (one mantissa per filter).
Pixel conv_window(const PreparedConv& conv, std::span<const Pixel> cells);

/// Max pooling (k x k window, stride k) adapted from the same shift-register
/// structure: a LineBuffer feeds it and tile-aligned windows are reduced.
class StreamPool {
 public:
  StreamPool(int kernel, int height, int width, int channels);

  std::optional<Pixel> step(const Pixel& pixel);
  bool next_step_emits() const;
  void reset() { lb_.reset(); }

  std::int64_t peak_stored() const { return lb_.peak_stored(); }

 private:
  int kernel_;
  LineBuffer lb_;
};

/// Nearest-neighbor k x k upsampling over a pixel stream. Emits one output
/// pixel per step; consumes an input pixel only on first-copy positions
/// (tracked by needs_input), replaying a single buffered row otherwise.
class StreamUpsample {
 public:
  StreamUpsample(int kernel, int in_height, int in_width, int channels);

  bool needs_input() const;
  /// `pixel` must be non-null exactly when needs_input() is true.
  Pixel step(const Pixel* pixel);
  bool done() const;
  void reset();

 private:
  int kernel_, in_height_, in_width_, channels_;
  std::vector<Pixel> row_;
  int out_row_ = 0, out_col_ = 0;
};

/// Zero-injection feeder that turns an H x W stream into the padded stream a
/// same-padding convolution consumes, leaving the window state machine
/// untouched. Asymmetric (floor/ceil) split for even kernels.
class ZeroPadInjector {
 public:
  ZeroPadInjector(int kernel, int height, int width, int channels);

  int padded_height() const { return height_ + pad_top_ + pad_bottom_; }
  int padded_width() const { return width_ + pad_left_ + pad_right_; }
  bool needs_input() const;  // next padded pixel is a real image pixel
  Pixel step(const Pixel* pixel);
  bool done() const;
  void reset() { row_ = col_ = 0; }

 private:
  int height_, width_, channels_;
  int pad_top_, pad_bottom_, pad_left_, pad_right_;
  int row_ = 0, col_ = 0;
};

/// Appends `pad` zero rows/columns in the lower and right directions.
class SpatialPadStream {
 public:
  SpatialPadStream(int pad, int height, int width, int channels);

  bool needs_input() const;
  Pixel step(const Pixel* pixel);
  bool done() const;
  void reset() { row_ = col_ = 0; }

 private:
  int pad_, height_, width_, channels_;
  int row_ = 0, col_ = 0;
};

/// Elementwise max(0, x); identity on unsigned formats.
Pixel relu_step(Pixel pixel, const fx::FxFormat& format);

/// Zero-pads the channel vector up to target, or drops trailing channels.
Pixel channel_pad_step(const Pixel& pixel, int target_channels);

/// Saturating fixed-point add: operands aligned to a common fractional
/// scale, summed exactly, then cast into out_format under its policies.
Pixel add_step(const Pixel& a, const Pixel& b, const fx::FxFormat& fmt_a,
               const fx::FxFormat& fmt_b, const fx::FxFormat& out_format);

}  // namespace pixelflow::stream
