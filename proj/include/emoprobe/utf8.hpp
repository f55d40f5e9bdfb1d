#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace emoprobe::utf8 {

/// Decodes one code point at pos and advances it. Malformed bytes decode as themselves.
char32_t decode(std::string_view s, std::size_t& pos);

bool is_space(char32_t c);

/// Code points of s with ASCII letters lowercased.
std::vector<char32_t> lowered_code_points(std::string_view s);

void append(std::string& out, char32_t cp);

}  // namespace emoprobe::utf8
