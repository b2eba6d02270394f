#include "fedmerge/selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fedmerge/common.hpp"
#include "fedmerge/text.hpp"

namespace fedmerge {

namespace {

CollectionStats stats_over(const CollectionSet& corpus, const std::vector<std::pair<std::string, const std::vector<std::string>*>>& members)
{
    if (members.empty()) {
        throw ValidationError("no collections to build statistics from");
    }
    CollectionStats stats;
    std::uint64_t total_cw = 0;
    for (const auto& [source, docs] : members) {
        SourceStats s;
        s.source_id = source;
        for (const auto& id : *docs) {
            auto tokens = tokenize(corpus.document(id).full_text());
            s.cw += tokens.size();
            std::sort(tokens.begin(), tokens.end());
            tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
            for (auto& t : tokens) {
                ++s.df[std::move(t)];
            }
        }
        for (const auto& [term, df] : s.df) {
            ++stats.cf[term];
        }
        total_cw += s.cw;
        stats.sources.push_back(std::move(s));
    }
    std::sort(stats.sources.begin(), stats.sources.end(),
              [](const auto& a, const auto& b) { return a.source_id < b.source_id; });
    stats.avg_cw = static_cast<double>(total_cw) / stats.sources.size();
    return stats;
}

}  // namespace

CollectionStats build_stats(std::span<const SampleSet> samples, const CollectionSet& corpus)
{
    std::vector<std::pair<std::string, const std::vector<std::string>*>> members;
    std::set<std::string> seen;
    for (const auto& s : samples) {
        if (!seen.insert(s.source_id).second) {
            throw ValidationError("duplicate sample for " + s.source_id);
        }
        members.emplace_back(s.source_id, &s.doc_ids);
    }
    return stats_over(corpus, members);
}

CollectionStats build_full_stats(const CollectionSet& corpus)
{
    std::vector<std::pair<std::string, const std::vector<std::string>*>> members;
    for (const auto& [code, docs] : corpus.collections()) {
        members.emplace_back(code, &docs);
    }
    return stats_over(corpus, members);
}

double cori_belief(double df, double cw, double avg_cw, double collections, double cf, const CoriParams& params)
{
    if (df <= 0.0) {
        return params.default_belief;
    }
    const double t = df / (df + params.df_base + params.df_factor * cw / avg_cw);
    const double i = std::log((collections + 0.5) / cf) / std::log(collections + 1.0);
    return params.default_belief + (1.0 - params.default_belief) * t * i;
}

std::vector<SourceScore> cori_select(std::span<const std::string> query, const CollectionStats& stats,
                                     std::size_t n_select, const CoriParams& params)
{
    if (query.empty()) {
        throw ValidationError("cannot select sources for an empty query");
    }
    if (n_select == 0) {
        throw ValidationError("n_select must be at least 1");
    }
    std::vector<std::string> terms(query.begin(), query.end());
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    std::vector<std::uint32_t> cf(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        cf[i] = stats.cf_of(terms[i]);
    }
    const auto c = static_cast<double>(stats.collection_count());

    std::vector<SourceScore> scores;
    scores.reserve(stats.sources.size());
    for (const auto& s : stats.sources) {
        double sum = 0.0;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            sum += cori_belief(s.df_of(terms[i]), static_cast<double>(s.cw), stats.avg_cw, c, cf[i], params);
        }
        scores.push_back({s.source_id, sum / terms.size(), 0});
    }
    std::sort(scores.begin(), scores.end(), [](const SourceScore& a, const SourceScore& b) {
        return a.score != b.score ? a.score > b.score : a.source_id < b.source_id;
    });
    if (scores.size() > n_select) {
        scores.resize(n_select);
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i].rank = static_cast<std::uint32_t>(i + 1);
    }
    return scores;
}

}  // namespace fedmerge
