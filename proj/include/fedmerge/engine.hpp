#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedmerge/corpus.hpp"

namespace fedmerge {

using DocNum = std::uint32_t;
using TermId = std::uint32_t;

struct Posting {
    DocNum doc;
    std::uint32_t tf;

    friend bool operator==(const Posting&, const Posting&) = default;
};

/// A document to index: an id and its already-tokenized text.
struct TokenizedDoc {
    std::string doc_id;
    std::vector<std::string> tokens;
};

/// Immutable inverted index over one document set.
///
/// Documents are numbered in doc_id order and terms in lexicographic order,
/// so two indexes built from the same documents are identical regardless of
/// input order. A forward list of distinct terms per document is kept for
/// query-based sampling.
class Index {
  public:
    Index() = default;

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    std::uint64_t total_tokens() const noexcept { return total_tokens_; }

    /// Sorted vocabulary; TermId is the position in this list.
    const std::vector<std::string>& vocabulary() const noexcept { return terms_; }
    std::optional<TermId> term_id(std::string_view term) const;
    std::span<const Posting> postings(TermId term) const;
    /// Document frequency; 0 for unknown terms.
    std::uint32_t df(std::string_view term) const;

    const std::string& doc_id(DocNum doc) const { return doc_ids_.at(doc); }
    std::optional<DocNum> doc_num(std::string_view doc_id) const;
    std::uint32_t doc_length(DocNum doc) const { return doc_lengths_.at(doc); }
    /// Distinct terms of `doc`, ascending.
    std::span<const TermId> doc_terms(DocNum doc) const;

    friend bool operator==(const Index&, const Index&) = default;

  private:
    friend Index build_index_from_tokens(std::vector<TokenizedDoc> docs);
    friend Index read_index(std::istream& in);
    friend void write_index(const Index& index, std::ostream& out);

    void finish();

    std::vector<std::string> terms_;
    std::vector<std::uint64_t> postings_offsets_;
    std::vector<Posting> postings_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::vector<std::uint64_t> forward_offsets_;
    std::vector<TermId> forward_;
    double avg_doc_length_ = 0.0;
    std::uint64_t total_tokens_ = 0;
};

/// Indexes the full text of `docs`. Throws ValidationError when `docs` is
/// empty or repeats a doc_id.
Index build_index(std::span<const Document> docs);
Index build_index_from_tokens(std::vector<TokenizedDoc> docs);

/// Tokenizes the given corpus members and indexes them.
Index build_collection_index(const CollectionSet& set, std::span<const std::string> doc_ids);

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;
    std::uint32_t rank = 0;

    friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Ordered results for one query from one source. Entries are sorted by
/// score descending with doc_id ascending on ties; ranks run 1..n.
struct RankedList {
    std::string query_id;
    std::string source_id;
    std::vector<RankedEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

inline constexpr std::string_view kCentralSource = "CENTRAL";
inline constexpr std::string_view kMergedSource = "MERGED";

/// Sorts entries by (score desc, doc_id asc) and renumbers ranks from 1.
void sort_and_rank(std::vector<RankedEntry>& entries);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// BM25 weight of one query-term occurrence in a document.
double bm25_term_weight(std::uint32_t tf, std::uint32_t df, std::size_t doc_count, double doc_length,
                        double avg_doc_length, const Bm25Params& params = {});

/// Top-k BM25 retrieval. Repeated query terms count once per occurrence.
/// An empty query returns an empty list. Throws ValidationError when k == 0.
RankedList search(const Index& index, std::span<const std::string> query, std::size_t k,
                  const Bm25Params& params = {}, std::string_view query_id = {},
                  std::string_view source_id = {});

/// Versioned binary serialisation with a CRC-32 trailer.
void write_index(const Index& index, std::ostream& out);
Index read_index(std::istream& in);
void save_index(const Index& index, const std::string& path);
Index load_index(const std::string& path);

}  // namespace fedmerge
