#pragma once

#include <cstddef>
#include <string_view>

namespace collage {

// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

// Byte offset of code point `index`; index == length maps to text.size().
// Throws std::out_of_range past the end.
std::size_t utf8_byte_offset(std::string_view text, std::size_t index);

// Code point index of byte offset `byte` (must fall on a code point boundary).
std::size_t utf8_codepoint_index(std::string_view text, std::size_t byte);

}  // namespace collage
