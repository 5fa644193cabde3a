// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pixelflow::fx {

enum class Rounding { RoundNearestEven, Truncate };
enum class Overflow { Saturate, Wrap };

/// Fixed-point format <T,I>: T total bits, I integer bits, the rest
/// fractional (minus one sign bit for signed formats).
struct FxFormat {
  int total_bits = 8;
  int integer_bits = 0;
  bool is_signed = false;
  Rounding rounding = Rounding::RoundNearestEven;
  Overflow overflow = Overflow::Saturate;

  int frac_bits() const { return total_bits - integer_bits - (is_signed ? 1 : 0); }

  std::int64_t min_mantissa() const {
    return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0;
  }
  std::int64_t max_mantissa() const {
    return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1
                     : (std::int64_t{1} << total_bits) - 1;
  }
  double step() const { return std::ldexp(1.0, -frac_bits()); }
  double min_value() const { return std::ldexp(double(min_mantissa()), -frac_bits()); }
  double max_value() const { return std::ldexp(double(max_mantissa()), -frac_bits()); }

  /// Throws std::invalid_argument if the format is malformed.
  void validate() const;

  bool operator==(const FxFormat&) const = default;

  /// Parses "u8.0" / "s16.6" style strings: signedness, total bits, integer bits.
  /// Rounding/overflow policies are not part of the string; callers supply them.
  static FxFormat parse(std::string_view text,
                        Rounding rounding = Rounding::RoundNearestEven,
                        Overflow overflow = Overflow::Saturate);
  std::string to_string() const;
};

/// One quantized scalar: real value = mantissa * 2^-frac_bits.
struct FxValue {
  std::int32_t mantissa = 0;
  FxFormat format;

  double value() const { return std::ldexp(double(mantissa), -format.frac_bits()); }
};

/// Widened accumulator format for exact multiply-accumulate chains.
/// bits is sized so a full K*K*C_in dot product plus bias cannot overflow.
struct AccFormat {
  int bits = 32;
  int frac = 0;  // frac(weight format) + frac(activation format)

  std::int64_t min_acc() const { return -(std::int64_t{1} << (bits - 1)); }
  std::int64_t max_acc() const { return (std::int64_t{1} << (bits - 1)) - 1; }

  /// Accumulator for a dot product of `terms` weight*activation products.
  /// Throws std::invalid_argument if the required width exceeds 63 bits.
  static AccFormat for_dot(const FxFormat& weight, const FxFormat& activation,
                           std::int64_t terms);
};

int ceil_log2(std::int64_t n);

/// Round-half-to-even to the nearest integer (no fenv dependence).
std::int64_t round_half_even(double x);

/// Rounds x to the nearest representable value under fmt's policies.
/// Out-of-range values are handled by the overflow policy, never an error.
FxValue quantize(double x, const FxFormat& fmt);

/// Exact integer multiply-accumulate. Throws std::overflow_error if the
/// result leaves the accumulator range (an AccFormat sizing bug).
std::int64_t mac(std::int64_t acc, std::int32_t weight_mantissa,
                 std::int32_t activation_mantissa, const AccFormat& fmt);
inline std::int64_t mac(std::int64_t acc, const FxValue& w, const FxValue& a,
                        const AccFormat& fmt) {
  return mac(acc, w.mantissa, a.mantissa, fmt);
}

/// Rescales an integer carrying src_frac fractional bits into dst,
/// applying dst's rounding and overflow policies.
std::int32_t requantize_mantissa(std::int64_t acc, int src_frac, const FxFormat& dst);
inline FxValue requantize(std::int64_t acc, int src_frac, const FxFormat& dst) {
  return FxValue{requantize_mantissa(acc, src_frac, dst), dst};
}

/// Channel-major (CHW) tensor of mantissas sharing one format.
struct FxTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> data;  // size channels * height * width
  FxFormat format;

  FxTensor() = default;
  FxTensor(int c, int h, int w, FxFormat fmt)
      : channels(c), height(h), width(w),
        data(std::size_t(c) * h * w, 0), format(fmt) {}

  std::int64_t size() const { return std::int64_t(channels) * height * width; }
  std::int32_t& at(int c, int y, int x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  std::int32_t at(int c, int y, int x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  double value_at(int c, int y, int x) const {
    return std::ldexp(double(at(c, y, x)), -format.frac_bits());
  }

  bool operator==(const FxTensor&) const = default;
};

}  // namespace pixelflow::fx
