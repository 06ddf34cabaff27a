#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace collage {

// One content token with the half-open byte range of the input it covers.
struct Token {
    int id = 0;
    std::size_t byte_begin = 0;
    std::size_t byte_end = 0;

    bool operator==(const Token&) const = default;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    // Content tokens only (no start/end/padding), with byte offsets into `text`.
    virtual std::vector<Token> tokenize(std::string_view text) const = 0;

    virtual int start_token() const = 0;
    virtual int end_token() const = 0;
    virtual int pad_token() const = 0;
    virtual int vocab_size() const = 0;
    // Fixed sequence length including start and end tokens.
    virtual int max_length() const = 0;
    virtual std::string token_string(int id) const = 0;
};

using MergeList = std::vector<std::pair<std::string, std::string>>;

// Byte-level BPE in the CLIP style: case-insensitive pre-tokenization into
// letter runs, single digits, contractions and punctuation runs; bytes mapped
// to printable code points; "</w>" marks the last symbol of a word; the vocab
// is the 256 byte symbols, their "</w>" forms, one entry per merge, then the
// start and end tokens.
class BpeTokenizer final : public Tokenizer {
public:
    explicit BpeTokenizer(MergeList merges, int max_length = 77);

    // Reads a CLIP-format merges file (first line is a version header).
    // `limit` caps the number of merges read; 0 reads all.
    static BpeTokenizer from_merges_file(const std::filesystem::path& path, std::size_t limit = 0,
                                         int max_length = 77);

    std::vector<Token> tokenize(std::string_view text) const override;
    int start_token() const override { return start_id_; }
    int end_token() const override { return end_id_; }
    int pad_token() const override { return end_id_; }
    int vocab_size() const override { return static_cast<int>(id_to_string_.size()); }
    int max_length() const override { return max_length_; }
    std::string token_string(int id) const override;

    const MergeList& merges() const { return merges_; }

private:
    struct Symbol {
        std::string text;
        std::size_t begin;
        std::size_t end;
    };

    std::vector<Symbol> bpe(std::string_view word, std::size_t offset) const;

    MergeList merges_;
    std::unordered_map<std::string, int> merge_rank_;
    std::unordered_map<std::string, int> string_to_id_;
    std::vector<std::string> id_to_string_;
    int start_id_ = 0;
    int end_id_ = 0;
    int max_length_ = 77;
};

// Half-open byte ranges of the pre-tokenizer's words for `text`.
std::vector<std::pair<std::size_t, std::size_t>> pretokenize(std::string_view text);

// Learns `num_merges` BPE merges from a corpus (most frequent pair first,
// ties broken lexicographically), using the same pre-tokenization.
MergeList learn_bpe_merges(const std::vector<std::string>& corpus, std::size_t num_merges);

}  // namespace collage
