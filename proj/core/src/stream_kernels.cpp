// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/stream_kernels.hpp"

#include <algorithm>

namespace pixelflow::stream {

namespace {

void check_stream_args(int kernel, int height, int width, int channels) {
  if (kernel < 1) throw std::invalid_argument("kernel must be >= 1");
  if (height < 1 || width < 1) throw std::invalid_argument("image dims must be >= 1");
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
  if (width < kernel || height < kernel) {
    throw std::invalid_argument("image must be at least kernel x kernel");
  }
}

}  // namespace

LineBuffer::LineBuffer(int kernel, int height, int width, int channels)
    : kernel_(kernel), height_(height), width_(width), channels_(channels) {
  check_stream_args(kernel, height, width, channels);
  registers_.resize(kernel_ - 1);
  window_.assign(std::size_t(kernel_) * kernel_, Pixel(channels_, 0));
}

std::int64_t LineBuffer::stored_pixels() const {
  std::int64_t total = std::int64_t(window_.size());
  for (const auto& reg : registers_) total += std::int64_t(reg.size());
  return total;
}

std::int64_t LineBuffer::storage_bound() const {
  return std::int64_t(kernel_ - 1) * width_ + std::int64_t(kernel_) * kernel_;
}

bool LineBuffer::next_step_emits() const {
  const int row = int(consumed_ / width_);
  const int col = int(consumed_ % width_);
  return row >= kernel_ - 1 && col >= kernel_ - 1;
}

std::optional<Window> LineBuffer::step(const Pixel& pixel) {
  if (consumed_ >= std::int64_t(height_) * width_) {
    throw std::logic_error("LineBuffer::step: all pixels of the image already consumed");
  }
  if (int(pixel.size()) != channels_) {
    throw std::invalid_argument("LineBuffer::step: pixel channel count mismatch");
  }
  const int row = int(consumed_ / width_);
  const int col = int(consumed_ % width_);

  // Shift the window one column to the left; the rightmost column is
  // rebuilt from the cascade below.
  for (int ki = 0; ki < kernel_; ++ki) {
    for (int kj = 0; kj + 1 < kernel_; ++kj) {
      window_[ki * kernel_ + kj] = window_[ki * kernel_ + kj + 1];
    }
  }
  window_[(kernel_ - 1) * kernel_ + (kernel_ - 1)] = pixel;

  // Push the new pixel into the register chain. A full register pops its
  // head; the popped pixel lands in the window column and cascades into the
  // next register.
  Pixel carry = pixel;
  for (int i = 0; i < kernel_ - 1; ++i) {
    auto& reg = registers_[i];
    const bool full = int(reg.size()) == width_;
    if (!full) {
      reg.push_back(std::move(carry));
      break;
    }
    Pixel popped = std::move(reg.front());
    reg.pop_front();
    reg.push_back(std::move(carry));
    window_[(kernel_ - 2 - i) * kernel_ + (kernel_ - 1)] = popped;
    carry = std::move(popped);
  }

  peak_stored_ = std::max(peak_stored_, stored_pixels());
  if (stored_pixels() > storage_bound()) {
    throw std::logic_error("LineBuffer: storage bound exceeded");
  }

  ++consumed_;
  if (row >= kernel_ - 1 && col >= kernel_ - 1) {
    Window w;
    w.out_row = row - (kernel_ - 1);
    w.out_col = col - (kernel_ - 1);
    w.cells = window_;
    return w;
  }
  return std::nullopt;
}

void LineBuffer::reset() {
  for (auto& reg : registers_) reg.clear();
  window_.assign(std::size_t(kernel_) * kernel_, Pixel(channels_, 0));
  consumed_ = 0;
}

EncodedWindow::EncodedWindow(int kernel, int height, int width, int channels)
    : kernel_(kernel), height_(height), width_(width), channels_(channels) {
  check_stream_args(kernel, height, width, channels);
  cells_.resize(std::size_t(kernel_) * kernel_);
}

std::int64_t EncodedWindow::stored_pixels() const {
  std::int64_t total = 0;
  for (const auto& c : cells_) total += std::int64_t(c.size());
  return total;
}

std::int64_t EncodedWindow::storage_bound() const {
  return std::int64_t(kernel_) * kernel_ * kernel_ * (width_ - kernel_ + 1);
}

bool EncodedWindow::next_step_emits() const {
  const int row = int(consumed_ / width_);
  const int col = int(consumed_ % width_);
  return row >= kernel_ - 1 && col >= kernel_ - 1;
}

std::optional<Window> EncodedWindow::step(const Pixel& pixel) {
  if (consumed_ >= std::int64_t(height_) * width_) {
    throw std::logic_error("EncodedWindow::step: all pixels of the image already consumed");
  }
  if (int(pixel.size()) != channels_) {
    throw std::invalid_argument("EncodedWindow::step: pixel channel count mismatch");
  }
  const int row = int(consumed_ / width_);
  const int col = int(consumed_ % width_);

  // Replicate the pixel into every window cell it will occupy: cell (ki,kj)
  // of output (row-ki, col-kj) whenever that output position exists.
  const int ki_lo = std::max(0, row - (height_ - kernel_));
  const int ki_hi = std::min(kernel_ - 1, row);
  const int kj_lo = std::max(0, col - (width_ - kernel_));
  const int kj_hi = std::min(kernel_ - 1, col);
  for (int ki = ki_lo; ki <= ki_hi; ++ki) {
    for (int kj = kj_lo; kj <= kj_hi; ++kj) {
      cells_[ki * kernel_ + kj].push_back(pixel);
    }
  }

  peak_stored_ = std::max(peak_stored_, stored_pixels());
  if (stored_pixels() > storage_bound()) {
    throw std::logic_error("EncodedWindow: storage bound exceeded");
  }

  ++consumed_;
  if (row >= kernel_ - 1 && col >= kernel_ - 1) {
    Window w;
    w.out_row = row - (kernel_ - 1);
    w.out_col = col - (kernel_ - 1);
    w.cells.resize(std::size_t(kernel_) * kernel_);
    for (int i = 0; i < kernel_ * kernel_; ++i) {
      w.cells[i] = std::move(cells_[i].front());
      cells_[i].pop_front();
    }
    return w;
  }
  return std::nullopt;
}

void EncodedWindow::reset() {
  for (auto& c : cells_) c.clear();
  consumed_ = 0;
}

PreparedConv prepare_conv(const ir::ConvBNParams& conv, int c_in,
                          const fx::FxFormat& activation_format) {
  if (conv.weights.size() !=
      std::size_t(conv.filters) * c_in * conv.kernel * conv.kernel) {
    throw std::invalid_argument("prepare_conv: weight size mismatch");
  }
  PreparedConv p;
  p.kernel = conv.kernel;
  p.c_in = c_in;
  p.filters = conv.filters;
  p.out_format = conv.out_format;
  const auto terms = std::int64_t(conv.kernel) * conv.kernel * c_in;
  p.acc = fx::AccFormat::for_dot(conv.weight_format, activation_format, terms);
  p.src_frac = p.acc.frac;

  p.weight_mantissas.resize(conv.weights.size());
  for (std::size_t i = 0; i < conv.weights.size(); ++i) {
    p.weight_mantissas[i] = fx::quantize(conv.weights[i], conv.weight_format).mantissa;
  }
  p.bias_mantissas.assign(conv.filters, 0);
  for (int f = 0; f < int(conv.bias.size()); ++f) {
    // Bias joins the accumulator directly, so it is scaled to src_frac.
    // Clamping to half the accumulator range keeps MAC headroom intact.
    const std::int64_t r = fx::round_half_even(std::ldexp(double(conv.bias[f]), p.src_frac));
    p.bias_mantissas[f] = std::clamp(r, p.acc.min_acc() / 2, p.acc.max_acc() / 2);
  }
  return p;
}

Pixel conv_window(const PreparedConv& conv, std::span<const Pixel> cells) {
  if (int(cells.size()) != conv.kernel * conv.kernel) {
    throw std::invalid_argument("conv_window: window cell count mismatch");
  }
  Pixel out(conv.filters);
  const int kk = conv.kernel * conv.kernel;
  for (int f = 0; f < conv.filters; ++f) {
    std::int64_t acc = conv.bias_mantissas[f];
    for (int cell = 0; cell < kk; ++cell) {
      const Pixel& px = cells[cell];
      for (int c = 0; c < conv.c_in; ++c) {
        const std::int32_t w =
            conv.weight_mantissas[(std::size_t(f) * conv.c_in + c) * kk + cell];
        acc = fx::mac(acc, w, px[c], conv.acc);
      }
    }
    out[f] = fx::requantize_mantissa(acc, conv.src_frac, conv.out_format);
  }
  return out;
}

StreamPool::StreamPool(int kernel, int height, int width, int channels)
    : kernel_(kernel), lb_(kernel, height, width, channels) {}

bool StreamPool::next_step_emits() const {
  if (!lb_.next_step_emits()) return false;
  // The upcoming window must sit on a kernel-aligned tile.
  const int row = int(lb_.pixels_consumed() / lb_.width());
  const int col = int(lb_.pixels_consumed() % lb_.width());
  return (row - (kernel_ - 1)) % kernel_ == 0 && (col - (kernel_ - 1)) % kernel_ == 0;
}

std::optional<Pixel> StreamPool::step(const Pixel& pixel) {
  auto win = lb_.step(pixel);
  if (!win) return std::nullopt;
  if (win->out_row % kernel_ != 0 || win->out_col % kernel_ != 0) return std::nullopt;
  Pixel out = win->cells[0];
  for (std::size_t i = 1; i < win->cells.size(); ++i) {
    const Pixel& px = win->cells[i];
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = std::max(out[c], px[c]);
  }
  return out;
}

StreamUpsample::StreamUpsample(int kernel, int in_height, int in_width, int channels)
    : kernel_(kernel), in_height_(in_height), in_width_(in_width), channels_(channels) {
  if (kernel < 1) throw std::invalid_argument("StreamUpsample: kernel must be >= 1");
  row_.assign(in_width_, Pixel(channels_, 0));
}

bool StreamUpsample::needs_input() const {
  return out_row_ % kernel_ == 0 && out_col_ % kernel_ == 0;
}

bool StreamUpsample::done() const {
  return out_row_ >= in_height_ * kernel_;
}

Pixel StreamUpsample::step(const Pixel* pixel) {
  if (done()) throw std::logic_error("StreamUpsample::step: image complete");
  if (needs_input()) {
    if (pixel == nullptr) throw std::logic_error("StreamUpsample::step: input required");
    row_[out_col_ / kernel_] = *pixel;
  } else if (pixel != nullptr) {
    throw std::logic_error("StreamUpsample::step: unexpected input");
  }
  Pixel out = row_[out_col_ / kernel_];
  if (++out_col_ == in_width_ * kernel_) {
    out_col_ = 0;
    ++out_row_;
  }
  return out;
}

void StreamUpsample::reset() {
  out_row_ = out_col_ = 0;
  row_.assign(in_width_, Pixel(channels_, 0));
}

ZeroPadInjector::ZeroPadInjector(int kernel, int height, int width, int channels)
    : height_(height), width_(width), channels_(channels) {
  if (kernel < 1) throw std::invalid_argument("kernel must be >= 1");
  if (height < 1 || width < 1) throw std::invalid_argument("image dims must be >= 1");
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
  const int total = kernel - 1;
  pad_top_ = total / 2;
  pad_bottom_ = total - pad_top_;
  pad_left_ = total / 2;
  pad_right_ = total - pad_left_;
}

bool ZeroPadInjector::needs_input() const {
  return row_ >= pad_top_ && row_ < pad_top_ + height_ && col_ >= pad_left_ &&
         col_ < pad_left_ + width_;
}

bool ZeroPadInjector::done() const { return row_ >= padded_height(); }

Pixel ZeroPadInjector::step(const Pixel* pixel) {
  if (done()) throw std::logic_error("ZeroPadInjector::step: image complete");
  Pixel out;
  if (needs_input()) {
    if (pixel == nullptr) throw std::logic_error("ZeroPadInjector::step: input required");
    out = *pixel;
  } else {
    if (pixel != nullptr) throw std::logic_error("ZeroPadInjector::step: unexpected input");
    out.assign(channels_, 0);
  }
  if (++col_ == padded_width()) {
    col_ = 0;
    ++row_;
  }
  return out;
}

SpatialPadStream::SpatialPadStream(int pad, int height, int width, int channels)
    : pad_(pad), height_(height), width_(width), channels_(channels) {
  if (pad < 0) throw std::invalid_argument("SpatialPadStream: pad must be >= 0");
}

bool SpatialPadStream::needs_input() const { return row_ < height_ && col_ < width_; }

bool SpatialPadStream::done() const { return row_ >= height_ + pad_; }

Pixel SpatialPadStream::step(const Pixel* pixel) {
  if (done()) throw std::logic_error("SpatialPadStream::step: image complete");
  Pixel out;
  if (needs_input()) {
    if (pixel == nullptr) throw std::logic_error("SpatialPadStream::step: input required");
    out = *pixel;
  } else {
    if (pixel != nullptr) throw std::logic_error("SpatialPadStream::step: unexpected input");
    out.assign(channels_, 0);
  }
  if (++col_ == width_ + pad_) {
    col_ = 0;
    ++row_;
  }
  return out;
}

Pixel relu_step(Pixel pixel, const fx::FxFormat& format) {
  if (format.is_signed) {
    for (auto& m : pixel) m = std::max(m, 0);
  }
  return pixel;
}

Pixel channel_pad_step(const Pixel& pixel, int target_channels) {
  Pixel out(target_channels, 0);
  const int copy = std::min(target_channels, int(pixel.size()));
  std::copy_n(pixel.begin(), copy, out.begin());
  return out;
}

Pixel add_step(const Pixel& a, const Pixel& b, const fx::FxFormat& fmt_a,
               const fx::FxFormat& fmt_b, const fx::FxFormat& out_format) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("add_step: operand channel counts differ");
  }
  const int frac = std::max(fmt_a.frac_bits(), fmt_b.frac_bits());
  const int sh_a = frac - fmt_a.frac_bits();
  const int sh_b = frac - fmt_b.frac_bits();
  Pixel out(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) {
    const std::int64_t sum =
        (std::int64_t(a[c]) << sh_a) + (std::int64_t(b[c]) << sh_b);
    out[c] = fx::requantize_mantissa(sum, frac, out_format);
  }
  return out;
}

}  // namespace pixelflow::stream
