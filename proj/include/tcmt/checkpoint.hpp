#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tcmt/model.hpp"

namespace tcmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelState state;
  std::uint64_t iteration = 0;
  std::uint64_t config_hash = 0;

  bool operator==(const Checkpoint&) const = default;
};

/**
 * Binary layout, little-endian:
 *   "TCMT" u32 version u32 section_count
 *   per section: u32 name_len, name, u64 payload_len, payload
 * Sections: net (key=value text), layout (key=value text), filters, weights,
 * covariance, coefficients, offset, meta. Arrays are u32 rank, u64 dims, f64 values.
 */
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

/// Written to a temp file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws DataError when the file is missing, truncated or has the wrong magic.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

/// key=value text for a layout (M, attrs, eyes).
std::string layout_to_text(const TaskLayout& layout);
TaskLayout parse_layout(const std::string& text);

}  // namespace tcmt
