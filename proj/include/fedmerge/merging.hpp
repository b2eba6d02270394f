#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedmerge/engine.hpp"
#include "fedmerge/mlmodels.hpp"
#include "fedmerge/selection.hpp"

namespace fedmerge {

/// A document returned both by a source and by the central sample index for
/// the same query.
struct OverlapPair {
    std::string doc_id;
    double local_score = 0.0;
    double central_score = 0.0;
    std::string source_id;

    friend bool operator==(const OverlapPair&, const OverlapPair&) = default;
};

/// Where a merged entry came from: every source that returned it, with the
/// local score each assigned.
struct Provenance {
    std::vector<std::string> sources;
    std::vector<double> local_scores;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct MergedRun {
    RankedList list;                     // source_id "MERGED"
    std::vector<Provenance> provenance;  // parallel to list.entries
    std::size_t fallback_sources = 0;    // per-source fits replaced by CORI scores
    bool query_fallback = false;         // whole query merged by CORI

    friend bool operator==(const MergedRun&, const MergedRun&) = default;
};

struct MergeOptions {
    /// Overlap points a per-source fit needs; below it the source's
    /// documents take CORI merge scores.
    std::size_t min_overlap = 3;
    /// Overlap points a global model needs; below it the whole query is
    /// merged with CORI.
    std::size_t gm_min_overlap = 5;
    ModelParams model;
    /// Master seed; each fit derives its own from (seed, query, source).
    std::uint64_t seed = 0;
    /// Allow OpenMP inside model fitting.
    bool parallel = false;
};

/// Replaces scores by evenly spaced values from 0.6 (rank 1) down to 0.4
/// (rank m), each multiplied by `source_score`; a single entry gets 0.6.
/// Throws ValidationError for an empty list or a source score outside [0,1].
RankedList assign_artificial_scores(const RankedList& list, double source_score);

/// Pairs for the doc_id intersection of the two lists, in source rank order.
std::vector<OverlapPair> compute_overlap(const RankedList& source_list, const RankedList& central_list);

/// Min-max normalisation; a list with one entry or no spread maps to 1.0.
std::vector<double> min_max_normalize(std::span<const double> values);

/// CORI merged score (D' + 0.4 * D' * C') / 1.4 of normalised document
/// score D' and normalised source score C'.
double cori_merge_score(double doc_norm, double source_norm);

/// CORI heuristic merge. Every list's source must be in `source_scores`.
MergedRun cori_merge(std::span<const RankedList> lists, std::span<const SourceScore> source_scores);

/// Per-source least-squares line from local to central scores (SSL).
/// Overlap documents keep their central score. Identical to
/// mm_merge(..., ModelKind::linear, ...).
MergedRun ssl_merge(std::span<const RankedList> lists, const RankedList& central_list,
                    std::span<const SourceScore> source_scores, const MergeOptions& options = {});

/// Multiple models: one regressor per source fitted on its overlap pairs,
/// used to estimate central scores of that source's other documents.
MergedRun mm_merge(std::span<const RankedList> lists, const RankedList& central_list,
                   std::span<const SourceScore> source_scores, ModelKind kind, const MergeOptions& options = {});

/// Cross-source feature vectors for every document returned by any source.
/// Position j holds the local score given by layout[j], or 0 if that source
/// did not return the document.
struct GmFeatureTable {
    std::vector<std::string> layout;
    std::map<std::string, std::vector<double>> features;
};

/// Layout follows the order of `source_scores`.
GmFeatureTable build_gm_features(std::span<const RankedList> lists, std::span<const SourceScore> source_scores);

/// Rows for the documents of `table` that the central list also returned,
/// in central rank order, with central scores as targets.
TrainingSet gm_training_set(const GmFeatureTable& table, const RankedList& central_list);

/// Global model: one regressor per query over GmFeatureTable vectors.
MergedRun gm_merge(std::span<const RankedList> lists, const RankedList& central_list,
                   std::span<const SourceScore> source_scores, ModelKind kind, const MergeOptions& options = {});

/// Truncates to `cutoff` entries and renumbers ranks.
MergedRun finalize(MergedRun run, std::size_t cutoff = 100);

}  // namespace fedmerge
