#include "text.hpp"

namespace fading {

TextCodec::TextCodec() {
    vocab_ = {"<pad>", "<null>", "photo", "of", "a", "year", "old", "person", "man", "woman", "boy", "girl"};
    for (int k = 1; k <= kMaxAge; ++k) vocab_.push_back(std::to_string(k));
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
}

TextCodec::TextCodec(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    if (vocab_.size() < 2 || vocab_[0] != "<pad>" || vocab_[1] != "<null>")
        throw_data("text codec: manifest vocabulary missing <pad>/<null> sentinels");
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
}

int TextCodec::token_id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw_data("text codec: word not in toy vocabulary: '" + word + "'");
    return it->second;
}

std::vector<int> TextCodec::tokenize(const std::vector<std::string>& words, int max_tokens) const {
    if (static_cast<int>(words.size()) > max_tokens) throw_data("text codec: prompt longer than max_tokens");
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(max_tokens));
    for (const auto& w : words) ids.push_back(token_id(w));
    while (static_cast<int>(ids.size()) < max_tokens) ids.push_back(kPadId);
    return ids;
}

}  // namespace fading
