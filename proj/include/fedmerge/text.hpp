#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fedmerge {

/// Splits text into index terms: ASCII-lowercased runs of alphanumeric
/// bytes (bytes >= 0x80 count as word characters so UTF-8 words survive),
/// minus single-digit tokens and a fixed stopword list. Indexing and
/// querying both go through this function.
std::vector<std::string> tokenize(std::string_view text);

/// Appends the tokens of `text` to `out`.
void tokenize_into(std::string_view text, std::vector<std::string>& out);

bool is_stopword(std::string_view term) noexcept;

/// Whitespace word split with no normalisation; used for word-count limits.
std::vector<std::string_view> split_words(std::string_view text);

}  // namespace fedmerge
