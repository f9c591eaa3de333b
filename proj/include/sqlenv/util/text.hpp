#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sqlenv::text {

/// Number of UTF-8 codepoints in `s`. Invalid lead bytes count as one each.
std::size_t codepoints(std::string_view s);

/// Prefix of `s` holding at most `max_codepoints` codepoints.
std::string_view take_codepoints(std::string_view s, std::size_t max_codepoints);

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string_view trim(std::string_view s);

/// Collapses every whitespace run to one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Python `repr` of a str: single quotes unless the text contains a single
/// quote and no double quote.
std::string python_str_repr(std::string_view s);

/// Python `repr` of a float (shortest round trip, trailing ".0" when integral).
std::string python_float_repr(double v);

/// 64-bit FNV-1a. Stable across platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Non-empty lines of a JSONL file.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace sqlenv::text
