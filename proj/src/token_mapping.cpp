#include "collage/token_mapping.hpp"

#include <algorithm>

#include "collage/errors.hpp"
#include "collage/text.hpp"

namespace collage {

PromptToken PromptEncoding::at(std::size_t position) const {
    if (position < tokens.size()) {
        return tokens[position];
    }
    PromptToken pad;
    pad.id = pad_id;
    pad.kind = TokenKind::Pad;
    return pad;
}

std::size_t TokenRoleMap::layer_token_count() const {
    return static_cast<std::size_t>(std::count_if(roles.begin(), roles.end(), [](int r) { return r != 0; }));
}

namespace {

PromptToken make_token(int id, TokenKind kind, std::size_t begin = 0, std::size_t end = 0) {
    PromptToken t;
    t.id = id;
    t.kind = kind;
    t.byte_begin = begin;
    t.byte_end = end;
    return t;
}

}  // namespace

PromptEncoding encode_prompt(const std::string& prompt, const Tokenizer& tokenizer) {
    PromptEncoding enc;
    enc.max_length = tokenizer.max_length();
    enc.pad_id = tokenizer.pad_token();
    enc.tokens.push_back(make_token(tokenizer.start_token(), TokenKind::Start));
    for (const Token& t : tokenizer.tokenize(prompt)) {
        enc.tokens.push_back(make_token(t.id, TokenKind::Text, t.byte_begin, t.byte_end));
    }
    enc.tokens.push_back(make_token(tokenizer.end_token(), TokenKind::End));
    if (enc.tokens.size() > static_cast<std::size_t>(enc.max_length)) {
        throw ValidationError("prompt needs " + std::to_string(enc.tokens.size()) + " tokens but the limit is " +
                              std::to_string(enc.max_length));
    }
    return enc;
}

void check_disjoint_spans(const Collage& collage) {
    for (std::size_t a = 0; a < collage.layers.size(); ++a) {
        for (std::size_t b = a + 1; b < collage.layers.size(); ++b) {
            const auto& la = collage.layers[a];
            const auto& lb = collage.layers[b];
            if (!la.span.empty() && !lb.span.empty() && la.span.overlaps(lb.span)) {
                throw ValidationError("text spans of layers '" + la.name + "' and '" + lb.name + "' overlap");
            }
        }
    }
}

TokenRoleMap classify_tokens(const Collage& collage, const PromptEncoding& encoding) {
    check_disjoint_spans(collage);

    struct ByteSpan {
        std::size_t begin;
        std::size_t end;
        int layer;
    };
    std::vector<ByteSpan> spans;
    for (std::size_t i = 0; i < collage.layers.size(); ++i) {
        const auto& span = collage.layers[i].span;
        if (span.empty()) {
            continue;
        }
        spans.push_back({utf8_byte_offset(collage.prompt, span.begin), utf8_byte_offset(collage.prompt, span.end),
                         static_cast<int>(i) + 1});
    }

    TokenRoleMap map;
    map.roles.assign(static_cast<std::size_t>(std::max<int>(encoding.max_length, static_cast<int>(encoding.size()))), 0);
    for (std::size_t p = 0; p < encoding.tokens.size(); ++p) {
        const PromptToken& tok = encoding.tokens[p];
        if (tok.kind == TokenKind::Injected) {
            map.roles[p] = tok.injected_layer;
            continue;
        }
        if (tok.kind != TokenKind::Text) {
            continue;
        }
        int owner = 0;
        int owners = 0;
        for (const auto& s : spans) {
            if (s.begin <= tok.byte_begin && tok.byte_end <= s.end) {
                owner = s.layer;
                ++owners;
            }
        }
        map.roles[p] = owners == 1 ? owner : 0;
    }
    return map;
}

TokenRoleMap classify_tokens(const Collage& collage, const Tokenizer& tokenizer) {
    return classify_tokens(collage, encode_prompt(collage.prompt, tokenizer));
}

}  // namespace collage
