#include "collage/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace collage {

namespace {

std::string codepoint_utf8(unsigned cp) {
    std::string out;
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
}

struct ByteSymbols {
    std::array<std::string, 256> symbol;
    std::vector<int> order;  // bytes in vocab order
};

// Reversible byte -> printable code point table used by CLIP/GPT-2 BPE.
const ByteSymbols& byte_symbols() {
    static const ByteSymbols table = [] {
        ByteSymbols t;
        std::vector<int> printable;
        for (int b = '!'; b <= '~'; ++b) printable.push_back(b);
        for (int b = 0xA1; b <= 0xAC; ++b) printable.push_back(b);
        for (int b = 0xAE; b <= 0xFF; ++b) printable.push_back(b);
        std::array<bool, 256> seen{};
        for (int b : printable) {
            seen[b] = true;
            t.symbol[b] = codepoint_utf8(static_cast<unsigned>(b));
            t.order.push_back(b);
        }
        unsigned next = 256;
        for (int b = 0; b < 256; ++b) {
            if (!seen[b]) {
                t.symbol[b] = codepoint_utf8(next++);
                t.order.push_back(b);
            }
        }
        return t;
    }();
    return table;
}

constexpr const char* kEndOfWord = "</w>";

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80; }
unsigned char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; }

// Length of a contraction ('s 't 're 've 'm 'll 'd) starting at `i`, or 0.
std::size_t contraction_at(std::string_view text, std::size_t i) {
    if (text[i] != '\'' || i + 1 >= text.size()) {
        return 0;
    }
    const unsigned char a = lower(static_cast<unsigned char>(text[i + 1]));
    const unsigned char b = i + 2 < text.size() ? lower(static_cast<unsigned char>(text[i + 2])) : 0;
    if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) {
        return 3;
    }
    if (a == 's' || a == 't' || a == 'm' || a == 'd') {
        return 2;
    }
    return 0;
}

std::vector<std::string> word_symbols(std::string_view word) {
    const auto& table = byte_symbols();
    std::vector<std::string> symbols;
    for (unsigned char c : word) {
        symbols.push_back(table.symbol[lower(c)]);
    }
    if (!symbols.empty()) {
        symbols.back() += kEndOfWord;
    }
    return symbols;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> pretokenize(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> words;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        if (const auto n = contraction_at(text, i); n > 0) {
            j = i + n;
        } else if (is_letter(c)) {
            while (j < text.size() && is_letter(static_cast<unsigned char>(text[j]))) ++j;
        } else if (is_digit(c)) {
            j = i + 1;
        } else {
            while (j < text.size()) {
                const auto d = static_cast<unsigned char>(text[j]);
                if (is_space(d) || is_letter(d) || is_digit(d)) break;
                ++j;
            }
        }
        words.emplace_back(i, j);
        i = j;
    }
    return words;
}

BpeTokenizer::BpeTokenizer(MergeList merges, int max_length) : merges_(std::move(merges)), max_length_(max_length) {
    if (max_length_ < 2) {
        throw std::invalid_argument("tokenizer max_length must leave room for start and end tokens");
    }
    const auto& table = byte_symbols();
    auto add = [this](const std::string& s) {
        if (string_to_id_.emplace(s, static_cast<int>(id_to_string_.size())).second) {
            id_to_string_.push_back(s);
        }
    };
    for (int b : table.order) add(table.symbol[b]);
    for (int b : table.order) add(table.symbol[b] + kEndOfWord);
    for (std::size_t r = 0; r < merges_.size(); ++r) {
        const auto& [a, b] = merges_[r];
        merge_rank_.emplace(a + " " + b, static_cast<int>(r));
        add(a + b);
    }
    start_id_ = static_cast<int>(id_to_string_.size());
    add("<|startoftext|>");
    end_id_ = static_cast<int>(id_to_string_.size());
    add("<|endoftext|>");
}

BpeTokenizer BpeTokenizer::from_merges_file(const std::filesystem::path& path, std::size_t limit, int max_length) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open merges file: " + path.string());
    }
    MergeList merges;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            if (line.rfind("#version", 0) == 0) continue;
        }
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos) {
            throw std::runtime_error("malformed merges line: " + line);
        }
        merges.emplace_back(line.substr(0, space), line.substr(space + 1));
        if (limit != 0 && merges.size() >= limit) break;
    }
    return BpeTokenizer(std::move(merges), max_length);
}

std::vector<BpeTokenizer::Symbol> BpeTokenizer::bpe(std::string_view word, std::size_t offset) const {
    const auto texts = word_symbols(word);
    std::vector<Symbol> symbols;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        symbols.push_back({texts[i], offset + i, offset + i + 1});
    }
    while (symbols.size() > 1) {
        int best = std::numeric_limits<int>::max();
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            const auto it = merge_rank_.find(symbols[i].text + " " + symbols[i + 1].text);
            if (it != merge_rank_.end() && it->second < best) {
                best = it->second;
            }
        }
        if (best == std::numeric_limits<int>::max()) {
            break;
        }
        const auto& [left, right] = merges_[static_cast<std::size_t>(best)];
        std::vector<Symbol> merged;
        for (std::size_t i = 0; i < symbols.size();) {
            if (i + 1 < symbols.size() && symbols[i].text == left && symbols[i + 1].text == right) {
                merged.push_back({left + right, symbols[i].begin, symbols[i + 1].end});
                i += 2;
            } else {
                merged.push_back(symbols[i]);
                ++i;
            }
        }
        symbols = std::move(merged);
    }
    return symbols;
}

std::vector<Token> BpeTokenizer::tokenize(std::string_view text) const {
    std::vector<Token> tokens;
    for (const auto& [b, e] : pretokenize(text)) {
        for (const auto& sym : bpe(text.substr(b, e - b), b)) {
            const auto it = string_to_id_.find(sym.text);
            if (it == string_to_id_.end()) {
                throw std::logic_error("BPE produced a symbol outside the vocabulary: " + sym.text);
            }
            tokens.push_back({it->second, sym.begin, sym.end});
        }
    }
    return tokens;
}

std::string BpeTokenizer::token_string(int id) const {
    if (id < 0 || id >= vocab_size()) {
        throw std::out_of_range("token id out of range");
    }
    return id_to_string_[static_cast<std::size_t>(id)];
}

MergeList learn_bpe_merges(const std::vector<std::string>& corpus, std::size_t num_merges) {
    std::map<std::vector<std::string>, int> words;
    for (const auto& line : corpus) {
        for (const auto& [b, e] : pretokenize(line)) {
            ++words[word_symbols(std::string_view(line).substr(b, e - b))];
        }
    }
    std::vector<std::pair<std::vector<std::string>, int>> vocab(words.begin(), words.end());

    MergeList merges;
    while (merges.size() < num_merges) {
        std::map<std::pair<std::string, std::string>, int> pair_counts;
        for (const auto& [symbols, count] : vocab) {
            for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
                pair_counts[{symbols[i], symbols[i + 1]}] += count;
            }
        }
        if (pair_counts.empty()) {
            break;
        }
        auto best = pair_counts.begin();
        for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        const auto [left, right] = best->first;
        merges.emplace_back(left, right);
        for (auto& [symbols, count] : vocab) {
            std::vector<std::string> merged;
            for (std::size_t i = 0; i < symbols.size();) {
                if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
                    merged.push_back(left + right);
                    i += 2;
                } else {
                    merged.push_back(symbols[i]);
                    ++i;
                }
            }
            symbols = std::move(merged);
        }
    }
    return merges;
}

}  // namespace collage
