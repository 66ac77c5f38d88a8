#include "fast/tokenizer.hpp"

#include <cctype>
#include <set>

namespace fast {

std::vector<std::string> Tokenizer::split_words(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> lines, std::span<const std::string> extra_words) {
    std::set<std::string> seen;
    for (const std::string& line : lines) {
        for (std::string& w : split_words(line)) seen.insert(std::move(w));
    }
    for (const std::string& w : extra_words) {
        for (std::string& piece : split_words(w)) seen.insert(std::move(piece));
    }
    seen.erase(kPadText);
    seen.erase(kMaskText);
    seen.erase(kUnkText);
    std::vector<std::string> table = {kPadText, kMaskText, kUnkText};
    table.insert(table.end(), seen.begin(), seen.end());
    return from_table(std::move(table));
}

Tokenizer Tokenizer::from_table(std::vector<std::string> words) {
    Tokenizer t;
    t.words_ = std::move(words);
    if (t.words_.size() < 3 || t.words_[kPad] != kPadText || t.words_[kMask] != kMaskText ||
        t.words_[kUnk] != kUnkText) {
        throw ValidationError("tokenizer table must start with the reserved [PAD]/[MASK]/[UNK] entries");
    }
    for (std::size_t i = 0; i < t.words_.size(); ++i) {
        auto [it, inserted] = t.index_.emplace(t.words_[i], static_cast<TokenId>(i));
        if (!inserted) throw ValidationError("duplicate word in tokenizer table: '" + t.words_[i] + "'");
    }
    return t;
}

std::vector<TokenId> Tokenizer::encode(const std::string& text) const {
    std::vector<TokenId> out;
    for (const std::string& w : split_words(text)) out.push_back(id(w));
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += word(ids[i]);
    }
    return out;
}

} // namespace fast
