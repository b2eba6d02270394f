#include "fedmerge/merging.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "fedmerge/common.hpp"

namespace fedmerge {

namespace {

constexpr double kCoriMergeWeight = 0.4;

// Accumulates per-source scored documents and resolves cross-source
// duplicates by maximum score.
class MergeAccumulator {
  public:
    void add(const std::string& doc_id, double merged, const std::string& source, double local)
    {
        auto [it, inserted] = entries_.try_emplace(doc_id, Item{merged, {}});
        if (!inserted) {
            it->second.score = std::max(it->second.score, merged);
        }
        it->second.prov.sources.push_back(source);
        it->second.prov.local_scores.push_back(local);
    }

    MergedRun finish(std::string query_id)
    {
        MergedRun run;
        run.list.query_id = std::move(query_id);
        run.list.source_id = std::string(kMergedSource);
        run.list.entries.reserve(entries_.size());
        for (const auto& [doc, item] : entries_) {
            run.list.entries.push_back({doc, item.score, 0});
        }
        sort_and_rank(run.list.entries);
        run.provenance.reserve(run.list.entries.size());
        for (const auto& e : run.list.entries) {
            run.provenance.push_back(std::move(entries_.at(e.doc_id).prov));
        }
        return run;
    }

  private:
    struct Item {
        double score;
        Provenance prov;
    };
    std::map<std::string, Item> entries_;
};

std::string query_of(std::span<const RankedList> lists, const RankedList* central)
{
    for (const auto& l : lists) {
        if (!l.query_id.empty()) {
            return l.query_id;
        }
    }
    return central ? central->query_id : std::string{};
}

// Normalised source score C' for each selected source.
std::unordered_map<std::string, double> normalized_source_scores(std::span<const SourceScore> source_scores)
{
    std::vector<double> raw;
    raw.reserve(source_scores.size());
    for (const auto& s : source_scores) {
        raw.push_back(s.score);
    }
    auto norm = min_max_normalize(raw);
    std::unordered_map<std::string, double> out;
    for (std::size_t i = 0; i < source_scores.size(); ++i) {
        out.emplace(source_scores[i].source_id, norm[i]);
    }
    return out;
}

void check_sources(std::span<const RankedList> lists, const std::unordered_map<std::string, double>& c_norm)
{
    for (const auto& l : lists) {
        if (!c_norm.count(l.source_id)) {
            throw ValidationError("list from " + l.source_id + " has no source selection score");
        }
    }
}

// CORI merged scores of one list, in list order.
std::vector<double> cori_list_scores(const RankedList& list, double source_norm)
{
    std::vector<double> raw;
    raw.reserve(list.size());
    for (const auto& e : list.entries) {
        raw.push_back(e.score);
    }
    auto d = min_max_normalize(raw);
    for (auto& v : d) {
        v = cori_merge_score(v, source_norm);
    }
    return d;
}

std::unordered_map<std::string, double> central_scores(const RankedList& central)
{
    std::unordered_map<std::string, double> out;
    out.reserve(central.size());
    for (const auto& e : central.entries) {
        out.emplace(e.doc_id, e.score);
    }
    return out;
}

}  // namespace

RankedList assign_artificial_scores(const RankedList& list, double source_score)
{
    if (list.empty()) {
        throw ValidationError("cannot assign artificial scores to an empty list");
    }
    if (!(source_score >= 0.0 && source_score <= 1.0)) {
        throw ValidationError("source score must lie in [0,1]");
    }
    RankedList out = list;
    const std::size_t m = out.size();
    const double step = m > 1 ? 0.2 / static_cast<double>(m - 1) : 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        out.entries[r].score = (0.6 - static_cast<double>(r) * step) * source_score;
        out.entries[r].rank = static_cast<std::uint32_t>(r + 1);
    }
    return out;
}

std::vector<OverlapPair> compute_overlap(const RankedList& source_list, const RankedList& central_list)
{
    auto central = central_scores(central_list);
    std::vector<OverlapPair> out;
    for (const auto& e : source_list.entries) {
        if (auto it = central.find(e.doc_id); it != central.end()) {
            out.push_back({e.doc_id, e.score, it->second, source_list.source_id});
        }
    }
    return out;
}

std::vector<double> min_max_normalize(std::span<const double> values)
{
    if (values.empty()) {
        return {};
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double spread = *hi - *lo;
    std::vector<double> out(values.size(), 1.0);
    if (values.size() > 1 && spread > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            out[i] = (values[i] - *lo) / spread;
        }
    }
    return out;
}

double cori_merge_score(double doc_norm, double source_norm)
{
    return (doc_norm + kCoriMergeWeight * doc_norm * source_norm) / (1.0 + kCoriMergeWeight);
}

MergedRun cori_merge(std::span<const RankedList> lists, std::span<const SourceScore> source_scores)
{
    const auto c_norm = normalized_source_scores(source_scores);
    check_sources(lists, c_norm);
    MergeAccumulator acc;
    for (const auto& list : lists) {
        const auto scores = cori_list_scores(list, c_norm.at(list.source_id));
        for (std::size_t i = 0; i < list.size(); ++i) {
            acc.add(list.entries[i].doc_id, scores[i], list.source_id, list.entries[i].score);
        }
    }
    return acc.finish(query_of(lists, nullptr));
}

MergedRun ssl_merge(std::span<const RankedList> lists, const RankedList& central_list,
                    std::span<const SourceScore> source_scores, const MergeOptions& options)
{
    return mm_merge(lists, central_list, source_scores, ModelKind::linear, options);
}

MergedRun mm_merge(std::span<const RankedList> lists, const RankedList& central_list,
                   std::span<const SourceScore> source_scores, ModelKind kind, const MergeOptions& options)
{
    const auto c_norm = normalized_source_scores(source_scores);
    check_sources(lists, c_norm);
    const auto central = central_scores(central_list);
    const std::string query_id = query_of(lists, &central_list);
    const std::size_t needed = std::max(options.min_overlap, min_training_rows(kind));

    MergeAccumulator acc;
    std::size_t fallbacks = 0;
    for (const auto& list : lists) {
        if (list.empty()) {
            continue;
        }
        const auto pairs = compute_overlap(list, central_list);
        if (pairs.size() < needed) {
            ++fallbacks;
            const auto scores = cori_list_scores(list, c_norm.at(list.source_id));
            for (std::size_t i = 0; i < list.size(); ++i) {
                acc.add(list.entries[i].doc_id, scores[i], list.source_id, list.entries[i].score);
            }
            continue;
        }
        TrainingSet ts(1);
        ts.layout = {list.source_id};
        for (const auto& p : pairs) {
            ts.add(std::span<const double>(&p.local_score, 1), p.central_score);
        }
        const auto fit = fit_model(kind, ts, options.model, derive_seed(options.seed, query_id, list.source_id),
                                   options.parallel);
        for (const auto& e : list.entries) {
            auto it = central.find(e.doc_id);
            const double global =
                it != central.end() ? it->second : fit.model.predict(std::span<const double>(&e.score, 1));
            acc.add(e.doc_id, global, list.source_id, e.score);
        }
    }
    auto run = acc.finish(query_id);
    run.fallback_sources = fallbacks;
    return run;
}

GmFeatureTable build_gm_features(std::span<const RankedList> lists, std::span<const SourceScore> source_scores)
{
    GmFeatureTable table;
    std::unordered_map<std::string, std::size_t> position;
    for (const auto& s : source_scores) {
        position.emplace(s.source_id, table.layout.size());
        table.layout.push_back(s.source_id);
    }
    const std::size_t dim = table.layout.size();
    for (const auto& list : lists) {
        auto pos = position.find(list.source_id);
        if (pos == position.end()) {
            throw ValidationError("list from " + list.source_id + " has no source selection score");
        }
        for (const auto& e : list.entries) {
            auto [it, inserted] = table.features.try_emplace(e.doc_id, dim, 0.0);
            it->second[pos->second] = e.score;
        }
    }
    return table;
}

TrainingSet gm_training_set(const GmFeatureTable& table, const RankedList& central_list)
{
    TrainingSet ts(table.layout.size());
    ts.layout = table.layout;
    for (const auto& e : central_list.entries) {
        if (auto it = table.features.find(e.doc_id); it != table.features.end()) {
            ts.add(it->second, e.score);
        }
    }
    return ts;
}

MergedRun gm_merge(std::span<const RankedList> lists, const RankedList& central_list,
                   std::span<const SourceScore> source_scores, ModelKind kind, const MergeOptions& options)
{
    const auto table = build_gm_features(lists, source_scores);
    const auto ts = gm_training_set(table, central_list);
    if (ts.size() < std::max(options.gm_min_overlap, min_training_rows(kind))) {
        auto run = cori_merge(lists, source_scores);
        run.query_fallback = true;
        return run;
    }
    const std::string query_id = query_of(lists, &central_list);
    const auto fit = fit_model(kind, ts, options.model, derive_seed(options.seed, query_id, "GM"), options.parallel);
    const auto central = central_scores(central_list);

    MergeAccumulator acc;
    std::map<std::string, double> global;
    for (const auto& [doc, features] : table.features) {
        auto it = central.find(doc);
        global.emplace(doc, it != central.end() ? it->second : fit.model.predict(features));
    }
    for (const auto& list : lists) {
        for (const auto& e : list.entries) {
            acc.add(e.doc_id, global.at(e.doc_id), list.source_id, e.score);
        }
    }
    return acc.finish(query_id);
}

MergedRun finalize(MergedRun run, std::size_t cutoff)
{
    if (run.list.entries.size() > cutoff) {
        run.list.entries.resize(cutoff);
        run.provenance.resize(cutoff);
    }
    for (std::size_t i = 0; i < run.list.entries.size(); ++i) {
        run.list.entries[i].rank = static_cast<std::uint32_t>(i + 1);
    }
    return run;
}

}  // namespace fedmerge
