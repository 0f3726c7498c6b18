// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "mona/bf16.hpp"

using namespace mona;

namespace {

// Value of a bf16 pattern computed from its fields, not by bit casting.
double field_value(std::uint16_t bits) {
  const int sign = bits >> 15;
  const int exp = (bits >> 7) & 0xFF;
  const int man = bits & 0x7F;
  double v;
  if (exp == 0) {
    v = std::ldexp(man / 128.0, -126);
  } else if (exp == 0xFF) {
    v = man ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else {
    v = std::ldexp(1.0 + man / 128.0, exp - 127);
  }
  return sign ? -v : v;
}

// Nearest bf16 to a finite float, ties to an even mantissa, found by
// comparing the two bracketing patterns.
std::uint16_t reference_round(float f) {
  const std::uint16_t sign = std::signbit(f) ? 0x8000 : 0;
  const double mag = std::fabs(static_cast<double>(f));
  std::uint16_t lo = 0;
  for (int step = 1 << 14; step > 0; step >>= 1) {
    const auto cand = static_cast<std::uint16_t>(lo + step);
    if (cand < 0x7F80 && field_value(cand) <= mag) lo = cand;
  }
  // lo is the largest finite pattern <= mag.
  const std::uint16_t hi = static_cast<std::uint16_t>(lo + 1);
  const double below = field_value(lo);
  const double above = hi == 0x7F80 ? std::ldexp(1.0, 128) : field_value(hi);
  std::uint16_t pick;
  if (mag - below < above - mag) pick = lo;
  else if (mag - below > above - mag) pick = hi;
  else pick = (lo & 1) ? hi : lo;
  return static_cast<std::uint16_t>(sign | pick);
}

}  // namespace

TEST(Bf16, KnownPatterns) {
  EXPECT_EQ(bf16_round(1.0).bits, 0x3F80);
  EXPECT_EQ(bf16_round(-2.0).bits, 0xC000);
  EXPECT_EQ(bf16_round(0.0).bits, 0x0000);
  EXPECT_EQ(bf16_round(-0.0).bits, 0x8000);
  // 1 + 2^-8 is halfway between 1 and 1 + 2^-7: ties go to the even pattern.
  EXPECT_EQ(bf16_round(1.0 + std::ldexp(1.0, -8)).bits, 0x3F80);
  // 1 + 3 * 2^-8 is halfway between odd 0x3F81 and even 0x3F82.
  EXPECT_EQ(bf16_round(1.0 + 3.0 * std::ldexp(1.0, -8)).bits, 0x3F82);
  EXPECT_EQ(bf16_round(1e39).bits, 0x7F80);
  EXPECT_EQ(bf16_round(-1e39).bits, 0xFF80);
  EXPECT_TRUE(std::isnan(bf16_decode(bf16_round(std::nan("")))));
}

TEST(Bf16, EveryPatternRoundTrips) {
  for (std::uint32_t b = 0; b < 0x10000; ++b) {
    const Bf16 v{static_cast<std::uint16_t>(b)};
    const double d = bf16_decode(v);
    if (std::isnan(d)) {
      EXPECT_TRUE(std::isnan(field_value(v.bits)));
      continue;
    }
    EXPECT_EQ(d, field_value(v.bits)) << std::hex << b;
    EXPECT_EQ(bf16_round(d).bits, v.bits) << std::hex << b;
  }
}

TEST(Bf16, MatchesNearestEvenReferenceOnRandomFloats) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::uint32_t> bits;
  int checked = 0;
  while (checked < 200000) {
    const float f = std::bit_cast<float>(bits(rng));
    if (!std::isfinite(f)) continue;
    ASSERT_EQ(bf16_round(f).bits, reference_round(f)) << f;
    ++checked;
  }
}

TEST(Bf16, RelativeErrorBound) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 100.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = n(rng);
    EXPECT_LE(std::fabs(bf16_quantize(x) - x), std::ldexp(std::fabs(x), -8) * (1.0 + 1e-6));
  }
}

TEST(Bf16, SpanCodecs) {
  const std::vector<double> src{0.1, -3.5, 1e-3, 1024.0};
  std::vector<Bf16> enc(src.size());
  std::vector<double> dec(src.size());
  bf16_encode_into(src, enc);
  bf16_decode_into(enc, dec);
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_EQ(dec[i], bf16_quantize(src[i]));
}
