#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedmerge/corpus.hpp"
#include "fedmerge/engine.hpp"

namespace fedmerge {

/// Representation set of one collection obtained by query-based sampling.
struct SampleSet {
    std::string source_id;
    std::vector<std::string> doc_ids;  // in sampling order, unique
    std::size_t queries_issued = 0;

    friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

struct SamplingParams {
    std::size_t target_size = 300;
    std::size_t docs_per_query = 4;
};

/// Query-based sampling of a single collection.
///
/// Issues one-term queries against `index`. The first term is drawn
/// uniformly from the index vocabulary; later terms are drawn uniformly from
/// the not-yet-issued terms of the documents sampled so far. Each query
/// contributes its top `docs_per_query` documents not already sampled.
/// Stops at `target_size` documents (truncating the final batch) or when no
/// unissued term remains anywhere in the vocabulary.
SampleSet query_based_sample(const Index& index, std::string source_id, const SamplingParams& params,
                             std::uint64_t seed);

/// Samples every collection with per-source seeds derived from `master_seed`.
/// `parallel` selects the OpenMP loop; the result is identical either way.
std::vector<SampleSet> sample_collections(const std::map<std::string, Index>& indexes, const SamplingParams& params,
                                          std::uint64_t master_seed, bool parallel = true);

/// Index over the union of all sampled documents plus, for each of them,
/// the collections whose samples contained it.
struct CentralIndex {
    Index index;
    std::map<std::string, std::vector<std::string>> sources_of;
};

/// Throws ValidationError on an empty sample list, an unknown source, or a
/// sampled doc_id that is not a member of its source collection.
CentralIndex build_central_index(std::span<const SampleSet> samples, const CollectionSet& corpus);

/// Record file: one line per sample, `source_id queries_issued doc_id...`.
void save_samples(std::span<const SampleSet> samples, const std::string& path);
std::vector<SampleSet> load_samples(const std::string& path);

}  // namespace fedmerge
