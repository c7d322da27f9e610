// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdemapper {

/// Lowercased maximal runs of Unicode letters and digits, in input order.
/// No stemming and no stop-word removal. Invalid UTF-8 bytes act as separators.
std::vector<std::string> tokenize(std::string_view text);

/// ASCII-only lowercase, used for case-insensitive identity checks.
std::string ascii_lower(std::string_view s);

/// Full lowercase via the tokenizer's case mapping (all code points).
std::string unicode_lower(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

std::string_view trim(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Truncates to at most `max_chars` code points without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_chars);

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view s);

} // namespace cdemapper
