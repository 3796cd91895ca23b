#pragma once

#include <map>
#include <string>
#include <vector>

#include "prompt.hpp"

namespace fading {

// Micro-vocabulary tokenizer for the toy text encoder: template words,
// subject nouns and the age numerals 1..K, one token per word.
class TextCodec {
public:
    static constexpr int kPadId = 0;
    static constexpr int kNullId = 1;

    TextCodec();
    explicit TextCodec(std::vector<std::string> vocab);  // from a checkpoint manifest

    int vocab_size() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }

    int token_id(const std::string& word) const;  // throws on unknown word

    // Pads with kPadId up to max_tokens; empty word list encodes to all-pad.
    std::vector<int> tokenize(const std::vector<std::string>& words, int max_tokens) const;

private:
    std::vector<std::string> vocab_;
    std::map<std::string, int> index_;
};

// Token ids plus their embedding matrix and the word -> token-range map.
struct TextEmbedding {
    std::vector<int> tokens;
    Tensor embedding;  // (max_tokens, embed_dim)
    std::vector<std::pair<int, int>> token_spans;  // per word: [begin, end)
};

}  // namespace fading
