// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/fixed_point.hpp"

#include <charconv>

namespace pixelflow::fx {

namespace {

// Widest carrier we quantize into before overflow handling.  Scaled doubles
// beyond this are clamped first; wrap semantics for such values are defined
// as wrap-after-clamp.
constexpr std::int64_t kScaledLimit = std::int64_t{1} << 56;

std::int64_t round_scaled(double scaled, Rounding mode) {
  if (scaled >= double(kScaledLimit)) return kScaledLimit;
  if (scaled <= double(-kScaledLimit)) return -kScaledLimit;
  const double fl = std::floor(scaled);
  auto base = std::int64_t(fl);
  if (mode == Rounding::Truncate) return base;
  const double rem = scaled - fl;
  if (rem > 0.5) return base + 1;
  if (rem < 0.5) return base;
  return (base % 2 == 0) ? base : base + 1;  // ties to even
}

std::int64_t apply_overflow(std::int64_t m, const FxFormat& fmt) {
  if (fmt.overflow == Overflow::Saturate) {
    if (m < fmt.min_mantissa()) return fmt.min_mantissa();
    if (m > fmt.max_mantissa()) return fmt.max_mantissa();
    return m;
  }
  const auto mask = (std::uint64_t{1} << fmt.total_bits) - 1;
  std::uint64_t u = std::uint64_t(m) & mask;
  if (fmt.is_signed && (u >> (fmt.total_bits - 1)) & 1) {
    return std::int64_t(u | ~mask);
  }
  return std::int64_t(u);
}

}  // namespace

void FxFormat::validate() const {
  if (total_bits < 1 || total_bits > 24) {
    throw std::invalid_argument("FxFormat: total_bits must be in [1, 24], got " +
                                std::to_string(total_bits));
  }
  if (integer_bits < 0) {
    throw std::invalid_argument("FxFormat: integer_bits must be >= 0");
  }
  if (frac_bits() < 0) {
    throw std::invalid_argument("FxFormat: T - I" +
                                std::string(is_signed ? " - 1" : "") +
                                " must be >= 0 for " + to_string());
  }
}

FxFormat FxFormat::parse(std::string_view text, Rounding rounding, Overflow overflow) {
  const auto fail = [&] {
    throw std::invalid_argument("bad format string '" + std::string(text) +
                                "' (expected e.g. \"u8.0\" or \"s16.6\")");
  };
  if (text.size() < 4) fail();
  FxFormat fmt;
  fmt.rounding = rounding;
  fmt.overflow = overflow;
  if (text[0] == 's') fmt.is_signed = true;
  else if (text[0] == 'u') fmt.is_signed = false;
  else fail();
  const auto dot = text.find('.');
  if (dot == std::string_view::npos || dot < 2 || dot + 1 >= text.size()) fail();
  auto parse_int = [&](std::string_view s, int& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail();
  };
  parse_int(text.substr(1, dot - 1), fmt.total_bits);
  parse_int(text.substr(dot + 1), fmt.integer_bits);
  fmt.validate();
  return fmt;
}

std::string FxFormat::to_string() const {
  return std::string(is_signed ? "s" : "u") + std::to_string(total_bits) + "." +
         std::to_string(integer_bits);
}

std::int64_t round_half_even(double x) {
  return round_scaled(x, Rounding::RoundNearestEven);
}

int ceil_log2(std::int64_t n) {
  if (n <= 1) return 0;
  int e = 0;
  std::int64_t v = 1;
  while (v < n) {
    v <<= 1;
    ++e;
  }
  return e;
}

AccFormat AccFormat::for_dot(const FxFormat& weight, const FxFormat& activation,
                             std::int64_t terms) {
  weight.validate();
  activation.validate();
  if (terms < 1) throw std::invalid_argument("AccFormat: terms must be >= 1");
  AccFormat acc;
  // |w*a| < 2^(Tw+Ta-1); summing `terms` products plus a bias term stays
  // below 2^(Tw+Ta-1+ceil_log2(terms)+1), so this width cannot overflow.
  acc.bits = weight.total_bits + activation.total_bits + ceil_log2(terms) + 1;
  acc.frac = weight.frac_bits() + activation.frac_bits();
  if (acc.bits > 63) {
    throw std::invalid_argument("AccFormat: required accumulator width " +
                                std::to_string(acc.bits) + " exceeds 63 bits");
  }
  return acc;
}

FxValue quantize(double x, const FxFormat& fmt) {
  fmt.validate();
  if (!std::isfinite(x)) {
    throw std::invalid_argument("quantize: input must be finite");
  }
  const double scaled = std::ldexp(x, fmt.frac_bits());
  const std::int64_t m = apply_overflow(round_scaled(scaled, fmt.rounding), fmt);
  return FxValue{std::int32_t(m), fmt};
}

std::int64_t mac(std::int64_t acc, std::int32_t weight_mantissa,
                 std::int32_t activation_mantissa, const AccFormat& fmt) {
  const std::int64_t result =
      acc + std::int64_t(weight_mantissa) * std::int64_t(activation_mantissa);
  if (result < fmt.min_acc() || result > fmt.max_acc()) {
    throw std::overflow_error("mac: accumulator overflow (AccFormat sized for " +
                              std::to_string(fmt.bits) + " bits)");
  }
  return result;
}

std::int32_t requantize_mantissa(std::int64_t acc, int src_frac, const FxFormat& dst) {
  dst.validate();
  if (src_frac < 0) throw std::invalid_argument("requantize: src_frac must be >= 0");
  const int shift = src_frac - dst.frac_bits();
  std::int64_t m;
  if (shift <= 0) {
    if (-shift > 62) throw std::invalid_argument("requantize: shift out of range");
    m = acc << -shift;  // exact: dst has more fractional bits than src
  } else if (shift > 62) {
    m = acc < 0 ? -1 : 0;  // everything rounds to ~0; keep floor semantics
    if (dst.rounding == Rounding::RoundNearestEven) m = 0;
  } else {
    const std::int64_t floor_q = acc >> shift;  // arithmetic shift == floor
    if (dst.rounding == Rounding::Truncate) {
      m = floor_q;
    } else {
      const std::int64_t rem = acc - (floor_q << shift);
      const std::int64_t half = std::int64_t{1} << (shift - 1);
      m = floor_q;
      if (rem > half || (rem == half && (floor_q & 1))) ++m;
    }
  }
  return std::int32_t(apply_overflow(m, dst));
}

}  // namespace pixelflow::fx
