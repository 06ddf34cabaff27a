#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "collage/collage.hpp"
#include "collage/tokenizer.hpp"

namespace collage {

enum class TokenKind { Start, End, Pad, Text, Injected };

struct PromptToken {
    int id = 0;
    TokenKind kind = TokenKind::Text;
    // Byte range in the prompt (Text tokens only).
    std::size_t byte_begin = 0;
    std::size_t byte_end = 0;
    // Owning layer index (1-based) and learned vector for Injected tokens.
    int injected_layer = 0;
    std::vector<double> embedding;

    bool operator==(const PromptToken&) const = default;
};

// Tokenized prompt: start token, content tokens, end token. Padding up to
// max_length is implicit.
struct PromptEncoding {
    std::vector<PromptToken> tokens;
    int max_length = 0;
    int pad_id = 0;

    // Token at a padded position (positions past the content are padding).
    PromptToken at(std::size_t position) const;
    std::size_t size() const { return tokens.size(); }
    bool operator==(const PromptEncoding&) const = default;
};

// Role per padded token position: 0 = global, j > 0 = layer token of layer j.
struct TokenRoleMap {
    std::vector<int> roles;

    std::size_t token_count() const { return roles.size(); }
    bool is_global(std::size_t position) const { return roles[position] == 0; }
    int layer_of(std::size_t position) const { return roles[position]; }
    std::size_t layer_token_count() const;
    bool operator==(const TokenRoleMap&) const = default;
};

// Throws ValidationError when the prompt needs more than max_length tokens.
PromptEncoding encode_prompt(const std::string& prompt, const Tokenizer& tokenizer);

// A text token is a layer token iff its byte range lies inside exactly one
// layer span; tokens straddling a span boundary stay global. Injected tokens
// belong to the layer they were injected for. Throws ValidationError when two
// layer spans overlap.
TokenRoleMap classify_tokens(const Collage& collage, const PromptEncoding& encoding);
TokenRoleMap classify_tokens(const Collage& collage, const Tokenizer& tokenizer);

void check_disjoint_spans(const Collage& collage);

}  // namespace collage
