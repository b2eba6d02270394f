#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fedmerge {

/// A patent-like text record. `codes` holds level-3 category codes.
struct Document {
    std::string doc_id;
    std::string title;
    std::string abstract_text;
    std::string description;
    std::string claims;
    std::vector<std::string> codes;

    /// Concatenation of every text field, as indexed.
    std::string full_text() const;
};

/// A search topic. Relevance judgments live in eval::Qrels.
struct Topic {
    std::string topic_id;
    std::string title;
    std::string abstract_text;
    std::string description;
    std::string claims;
};

/// Names of the record keys that carry each logical field.
struct FieldMap {
    std::string doc_id = "doc_id";
    std::string topic_id = "topic_id";
    std::string title = "title";
    std::string abstract_text = "abstract";
    std::string description = "description";
    std::string claims = "claims";
    std::string codes = "codes";
};

/// Documents partitioned into topical collections, one per level-3 code.
/// Collections and their member lists are sorted lexicographically.
class CollectionSet {
  public:
    CollectionSet() = default;

    /// Partitions `docs` by the level-3 prefix of each code. Throws
    /// ValidationError on duplicate doc ids or documents without codes.
    static CollectionSet from_documents(std::vector<Document> docs);

    const std::map<std::string, std::vector<std::string>>& collections() const noexcept { return collections_; }
    const std::map<std::string, Document>& corpus() const noexcept { return corpus_; }

    /// Member doc ids of `code`; throws ValidationError if unknown.
    const std::vector<std::string>& members(const std::string& code) const;
    const Document& document(const std::string& doc_id) const;
    bool contains(const std::string& doc_id) const { return corpus_.count(doc_id) != 0; }

    std::vector<std::string> codes() const;
    std::size_t size() const noexcept { return collections_.size(); }

  private:
    std::map<std::string, std::vector<std::string>> collections_;
    std::map<std::string, Document> corpus_;
};

/// A record rejected while loading, with its 1-based line number.
struct RecordError {
    std::size_t line = 0;
    std::string message;
};

struct CorpusLoad {
    CollectionSet collections;
    std::size_t records = 0;
    std::vector<RecordError> errors;
};

struct TopicLoad {
    std::vector<Topic> topics;
    std::size_t records = 0;
    std::vector<RecordError> errors;
};

/// Reads a JSON-lines corpus. Malformed records are reported in
/// CorpusLoad::errors rather than dropped silently. Throws IoError if the
/// file cannot be read.
CorpusLoad load_corpus(const std::string& path, const FieldMap& fields = {});

/// Reads a JSON-lines topics file; topics are returned in file order.
TopicLoad load_topics(const std::string& path, const FieldMap& fields = {});

/// Level-3 (subclass) prefix of a classification code: its first four
/// characters after trimming, e.g. "H04L21/00" -> "H04L".
std::string partition_code(std::string_view raw_code);

struct QueryLimits {
    std::size_t desc_word_limit = 500;
    std::size_t total_word_limit = 1000;
};

/// Title + abstract + leading description words + claims, tokenized and
/// truncated to `total_word_limit` tokens. Throws ValidationError when the
/// topic has no text.
std::vector<std::string> build_query(const Topic& topic, const QueryLimits& limits = {});

}  // namespace fedmerge
