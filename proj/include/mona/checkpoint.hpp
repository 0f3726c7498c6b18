// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mona/optimizers.hpp"

namespace mona {

/// Unreadable, truncated or malformed checkpoint, or a failed write.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout, all integers little-endian:
///
///   "MONACKPT" u32 version
///   u64 length, config text (UTF-8, usually JSON)
///   u32 group count, then per group:
///     u32 length, name; u8 kind (0 matrix, 1 vector); u64 step; u32 buffer count
///     per buffer: u32 length, name; u8 format (0 f64, 1 bf16); u64 rows; u64 cols;
///                 rows*cols values (8 or 2 bytes each)
///
/// Only allocated buffers are written. bf16 buffers take the weight shape.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::vector<ParamGroup> groups;
};

void save_checkpoint(const std::filesystem::path& path, std::string_view config_text,
                     std::span<const ParamGroup> groups);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized form, exposed for tests.
std::string encode_checkpoint(std::string_view config_text, std::span<const ParamGroup> groups);
Checkpoint decode_checkpoint(std::string_view bytes);

/// One line per buffer: group, buffer name, format, shape and Frobenius norm.
std::string describe_checkpoint(const Checkpoint& ckpt);

}  // namespace mona
