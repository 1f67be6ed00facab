#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xgkit::utf8 {

// Decodes UTF-8 into scalar values. Malformed bytes decode to U+FFFD, one per byte.
std::vector<char32_t> decode(std::string_view s);

void append(std::string& out, char32_t cp);
std::string encode(const std::vector<char32_t>& cps);
std::string encode(char32_t cp);

// Length in bytes of the valid UTF-8 sequence starting at s[i], or 0 if invalid.
std::size_t valid_sequence_length(std::string_view s, std::size_t i);

std::size_t count_scalars(std::string_view s);

} // namespace xgkit::utf8
