// SPDX-License-Identifier: Apache-2.0
#include "mona/bf16.hpp"

#include <bit>
#include <cassert>
#include <cmath>

namespace mona {

Bf16 bf16_round(double x) noexcept {
  const auto f = static_cast<float>(x);
  const auto bits = std::bit_cast<std::uint32_t>(f);
  if (std::isnan(f)) {
    return Bf16{static_cast<std::uint16_t>((bits >> 16) | 0x0040u)};
  }
  const std::uint32_t lsb = (bits >> 16) & 1u;
  const std::uint32_t rounded = bits + 0x7FFFu + lsb;
  return Bf16{static_cast<std::uint16_t>(rounded >> 16)};
}

double bf16_decode(Bf16 v) noexcept {
  const std::uint32_t bits = static_cast<std::uint32_t>(v.bits) << 16;
  return static_cast<double>(std::bit_cast<float>(bits));
}

void bf16_encode_into(std::span<const double> src, std::span<Bf16> dst) {
  assert(src.size() == dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = bf16_round(src[i]);
}

void bf16_decode_into(std::span<const Bf16> src, std::span<double> dst) {
  assert(src.size() == dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = bf16_decode(src[i]);
}

}  // namespace mona
