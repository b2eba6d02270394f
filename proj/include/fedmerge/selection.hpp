#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedmerge/corpus.hpp"
#include "fedmerge/sampling.hpp"

namespace fedmerge {

/// Term statistics of one collection, computed over its sample (or over the
/// full collection when cooperating sources expose them).
struct SourceStats {
    std::string source_id;
    std::unordered_map<std::string, std::uint32_t> df;
    std::uint64_t cw = 0;  // total words

    std::uint32_t df_of(const std::string& term) const
    {
        auto it = df.find(term);
        return it == df.end() ? 0 : it->second;
    }
};

/// Statistics driving CORI source selection. Sources are sorted by id.
struct CollectionStats {
    std::vector<SourceStats> sources;
    std::unordered_map<std::string, std::uint32_t> cf;  // collections containing t
    double avg_cw = 0.0;

    std::size_t collection_count() const noexcept { return sources.size(); }
    std::uint32_t cf_of(const std::string& term) const
    {
        auto it = cf.find(term);
        return it == cf.end() ? 0 : it->second;
    }
};

/// Statistics over sampled documents only.
CollectionStats build_stats(std::span<const SampleSet> samples, const CollectionSet& corpus);

/// Statistics over every member of every collection.
CollectionStats build_full_stats(const CollectionSet& corpus);

struct SourceScore {
    std::string source_id;
    double score = 0.0;
    std::uint32_t rank = 0;

    friend bool operator==(const SourceScore&, const SourceScore&) = default;
};

struct CoriParams {
    double default_belief = 0.4;
    double df_base = 50.0;
    double df_factor = 150.0;
};

/// CORI belief p(t|c) = b + (1 - b) * T * I with
///   T = df / (df + 50 + 150 * cw / avg_cw)
///   I = log((C + 0.5) / cf) / log(C + 1).
/// Returns b when df == 0.
double cori_belief(double df, double cw, double avg_cw, double collections, double cf,
                   const CoriParams& params = {});

/// Ranks every collection by mean belief over the distinct query terms and
/// returns the best `n_select`, ties broken by source_id ascending. Throws
/// ValidationError on an empty query or n_select == 0.
std::vector<SourceScore> cori_select(std::span<const std::string> query, const CollectionStats& stats,
                                     std::size_t n_select = 20, const CoriParams& params = {});

}  // namespace fedmerge
