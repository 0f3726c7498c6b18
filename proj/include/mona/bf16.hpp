// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mona {

/// bfloat16 bit pattern: 1 sign bit, 8 exponent bits, 7 mantissa bits.
struct Bf16 {
  std::uint16_t bits = 0;

  friend bool operator==(Bf16, Bf16) = default;
};

/// Rounds to binary32 first, then to bfloat16 with round-to-nearest-even on
/// the dropped 16 bits. Overflow saturates to the infinity pattern; NaN stays
/// a (quiet) NaN. Callers decide whether non-finite values are acceptable.
Bf16 bf16_round(double x) noexcept;
double bf16_decode(Bf16 v) noexcept;

inline double bf16_quantize(double x) noexcept { return bf16_decode(bf16_round(x)); }

void bf16_encode_into(std::span<const double> src, std::span<Bf16> dst);
void bf16_decode_into(std::span<const Bf16> src, std::span<double> dst);

}  // namespace mona
