// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations used only by tests. These share no
// code with the library paths they check: rounding, overflow handling and
// the dense convolution are re-derived here from first principles.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct Format {
  int total_bits;
  int integer_bits;
  bool is_signed;
  bool round_even;  // false = truncate (floor)
  bool saturate;    // false = wrap

  int frac() const { return total_bits - integer_bits - (is_signed ? 1 : 0); }
  std::int64_t lo() const {
    return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0;
  }
  std::int64_t hi() const {
    return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1
                     : (std::int64_t{1} << total_bits) - 1;
  }
};

// Rounds v (exact rational value * 2^frac given as long double) to integer.
inline std::int64_t round_ld(long double scaled, bool round_even) {
  const long double fl = std::floor(scaled);
  auto base = (std::int64_t)fl;
  if (!round_even) return base;
  const long double rem = scaled - fl;
  if (rem > 0.5L) return base + 1;
  if (rem < 0.5L) return base;
  return base % 2 == 0 ? base : base + 1;
}

inline std::int64_t wrap_bits(std::int64_t m, int bits, bool is_signed) {
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  std::uint64_t u = std::uint64_t(m) & mask;
  if (is_signed && (u >> (bits - 1)) & 1) return std::int64_t(u | ~mask);
  return std::int64_t(u);
}

inline std::int64_t quantize(double x, const Format& f) {
  std::int64_t m = round_ld((long double)x * std::exp2l(f.frac()), f.round_even);
  if (f.saturate) {
    if (m < f.lo()) m = f.lo();
    if (m > f.hi()) m = f.hi();
  } else {
    m = wrap_bits(m, f.total_bits, f.is_signed);
  }
  return m;
}

// Exact rescale of an integer accumulator carrying src_frac fractional bits
// into the destination format, done in 128-bit arithmetic.
inline std::int64_t requantize(__int128 acc, int src_frac, const Format& dst) {
  const int shift = src_frac - dst.frac();
  __int128 m;
  if (shift <= 0) {
    m = acc << -shift;
  } else {
    const __int128 one = 1;
    const __int128 floor_q = acc >> shift;  // floor for negatives as well
    if (!dst.round_even) {
      m = floor_q;
    } else {
      const __int128 rem = acc - (floor_q << shift);
      const __int128 half = one << (shift - 1);
      m = floor_q;
      if (rem > half || (rem == half && (floor_q & 1))) m += 1;
    }
  }
  std::int64_t v = (std::int64_t)m;
  if (dst.saturate) {
    if (m < dst.lo()) v = dst.lo();
    if (m > dst.hi()) v = dst.hi();
  } else {
    v = wrap_bits(v, dst.total_bits, dst.is_signed);
  }
  return v;
}

// Dense valid-mode convolution over mantissas: out[f][oy][ox]. Inputs are
// CHW, weights [f][c][ki][kj]. Bias carries src_frac fractional bits.
inline std::vector<std::int64_t> dense_conv(
    const std::vector<std::int32_t>& image, int c_in, int h, int w,
    const std::vector<std::int32_t>& weights, const std::vector<std::int64_t>& bias,
    int filters, int k, int src_frac, const Format& out_fmt) {
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<std::int64_t> out(std::size_t(filters) * oh * ow);
  for (int f = 0; f < filters; ++f) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        __int128 acc = bias.empty() ? 0 : bias[f];
        for (int c = 0; c < c_in; ++c) {
          for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
              const std::int32_t a =
                  image[(std::size_t(c) * h + oy + ki) * w + ox + kj];
              const std::int32_t wm =
                  weights[((std::size_t(f) * c_in + c) * k + ki) * k + kj];
              acc += (__int128)a * wm;
            }
          }
        }
        out[(std::size_t(f) * oh + oy) * ow + ox] = requantize(acc, src_frac, out_fmt);
      }
    }
  }
  return out;
}

}  // namespace oracle
