#include "fedmerge/text.hpp"

#include <algorithm>
#include <array>

namespace fedmerge {

namespace {

// Sorted for binary search.
constexpr std::array<std::string_view, 48> kStopwords = {
    "a",     "an",   "and",  "any",  "are",   "as",    "at",   "be",    "by",    "can",
    "each",  "for",  "from", "has",  "have",  "in",    "into", "is",    "it",    "its",
    "may",   "more", "no",   "not",  "of",    "on",    "one",  "or",    "other", "said",
    "such",  "than", "that", "the",  "their", "there", "these", "this", "to",    "two",
    "was",   "were", "when", "wherein", "which", "with", "within", "would"};

static_assert(std::is_sorted(kStopwords.begin(), kStopwords.end()));

bool is_word_byte(unsigned char c) noexcept
{
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

bool is_stopword(std::string_view term) noexcept
{
    return std::binary_search(kStopwords.begin(), kStopwords.end(), term);
}

void tokenize_into(std::string_view text, std::vector<std::string>& out)
{
    std::size_t i = 0;
    const std::size_t n = text.size();
    std::string token;
    while (i < n) {
        while (i < n && !is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        token.clear();
        bool numeric = true;
        while (i < n && is_word_byte(static_cast<unsigned char>(text[i]))) {
            auto c = static_cast<unsigned char>(text[i]);
            if (c >= 'A' && c <= 'Z') {
                c = static_cast<unsigned char>(c - 'A' + 'a');
            }
            numeric = numeric && c >= '0' && c <= '9';
            token.push_back(static_cast<char>(c));
            ++i;
        }
        if (token.empty() || (numeric && token.size() == 1) || is_stopword(token)) {
            continue;
        }
        out.push_back(token);
    }
}

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    tokenize_into(text, out);
    return out;
}

std::vector<std::string_view> split_words(std::string_view text)
{
    std::vector<std::string_view> words;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) {
            ++i;
        }
        std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) {
            ++i;
        }
        if (i > start) {
            words.push_back(text.substr(start, i - start));
        }
    }
    return words;
}

}  // namespace fedmerge
