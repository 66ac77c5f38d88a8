#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fast/errors.hpp"

namespace fast {

using TokenId = std::uint32_t;

// Word-level whitespace tokenizer. Vocabulary = reserved specials plus the
// sorted set of distinct words seen at build time, so the table is a pure
// function of its inputs. Round-trip encode/decode is the identity for
// in-vocabulary text.
class Tokenizer {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kMask = 1;
    static constexpr TokenId kUnk = 2;
    static constexpr const char* kPadText = "[PAD]";
    static constexpr const char* kMaskText = "[MASK]";
    static constexpr const char* kUnkText = "[UNK]";

    Tokenizer() = default;

    static Tokenizer build(std::span<const std::string> lines,
                           std::span<const std::string> extra_words = {});

    // Reconstruct from a saved word table (specials included, in id order).
    static Tokenizer from_table(std::vector<std::string> words);

    std::size_t vocab_size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    bool contains(const std::string& word) const { return index_.count(word) > 0; }

    TokenId id(const std::string& word) const {
        auto it = index_.find(word);
        if (it == index_.end()) throw VocabError("word not in vocabulary: '" + word + "'");
        return it->second;
    }

    const std::string& word(TokenId id) const {
        if (id >= words_.size()) throw VocabError("token id out of range: " + std::to_string(id));
        return words_[id];
    }

    // Splits on runs of whitespace. Throws VocabError on the first unknown word.
    std::vector<TokenId> encode(const std::string& text) const;
    std::string decode(std::span<const TokenId> ids) const;

    static std::vector<std::string> split_words(const std::string& text);

    bool operator==(const Tokenizer& o) const { return words_ == o.words_; }

private:
    std::vector<std::string> words_;
    std::map<std::string, TokenId> index_;
};

} // namespace fast
