#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedmerge/corpus.hpp"
#include "fedmerge/eval.hpp"

namespace fedmerge {

/// Shape of a generated topical test collection.
struct SyntheticParams {
    std::size_t collections = 24;
    std::size_t docs = 4800;
    std::size_t topics = 50;
    std::size_t background_vocab = 4000;
    std::size_t subject_vocab = 60;  // words per subject
    std::size_t topic_vocab = 12;    // words per topic
    std::size_t min_relevant = 10;
    std::size_t max_relevant = 30;
    std::size_t hard_negatives = 30;  // non-relevant docs per topic that mention it
    double multi_code_rate = 0.1;
    std::uint64_t seed = 1;
};

/// Documents grouped into classification-code collections by subject, plus
/// topics whose relevant documents are scattered over related collections.
struct SyntheticCollection {
    std::vector<Document> docs;
    std::vector<Topic> topics;
    Qrels qrels;
};

SyntheticCollection generate_synthetic(const SyntheticParams& params);

/// Writes corpus.jsonl, topics.jsonl and qrels.txt into `dir`.
void write_synthetic(const SyntheticCollection& data, const std::string& dir);

/// Monotone increasing transform a remote engine applies to its own scores.
/// Models search engines whose scores are not comparable with each other.
struct ScoreDistortion {
    enum class Kind { identity, power, log, saturating };
    Kind kind = Kind::identity;
    double scale = 1.0;
    double shape = 1.0;

    double apply(double score) const;
};

/// Per-source nonlinear distortion drawn from hash(seed, source_id).
ScoreDistortion make_distortion(std::string_view source_id, std::uint64_t seed);

}  // namespace fedmerge
