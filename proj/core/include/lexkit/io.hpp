// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lexkit::io {

/// Whole-file read; throws std::runtime_error naming the path on failure.
std::string read_file(const std::string& path);

/// Whole-file write (binary, overwrite); throws naming the path.
void write_file(const std::string& path, std::string_view content);

/// Strict UTF-8 validation (rejects overlongs, surrogates, > U+10FFFF).
bool valid_utf8(std::string_view s);

/// Splits on '\n', dropping a trailing '\r' per line and a final empty line.
std::vector<std::string> split_lines(std::string_view s);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::string_view s);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

}  // namespace lexkit::io
