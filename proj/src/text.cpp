#include "collage/text.hpp"

#include <stdexcept>

namespace collage {

namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace

std::size_t utf8_length(std::string_view text) {
    std::size_t n = 0;
    for (unsigned char c : text) {
        if (!is_continuation(c)) {
            ++n;
        }
    }
    return n;
}

std::size_t utf8_byte_offset(std::string_view text, std::size_t index) {
    std::size_t seen = 0;
    for (std::size_t b = 0; b < text.size(); ++b) {
        if (is_continuation(static_cast<unsigned char>(text[b]))) {
            continue;
        }
        if (seen == index) {
            return b;
        }
        ++seen;
    }
    if (seen == index) {
        return text.size();
    }
    throw std::out_of_range("code point index past end of text");
}

std::size_t utf8_codepoint_index(std::string_view text, std::size_t byte) {
    if (byte > text.size()) {
        throw std::out_of_range("byte offset past end of text");
    }
    if (byte < text.size() && is_continuation(static_cast<unsigned char>(text[byte]))) {
        throw std::invalid_argument("byte offset inside a code point");
    }
    return utf8_length(text.substr(0, byte));
}

}  // namespace collage
