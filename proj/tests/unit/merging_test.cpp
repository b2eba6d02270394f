#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "fedmerge/common.hpp"
#include "fedmerge/merging.hpp"
#include "helpers.hpp"

using namespace fedmerge;
using fedmerge::testing::make_list;

namespace {

std::vector<SourceScore> scores_for(std::vector<std::pair<std::string, double>> s)
{
    std::vector<SourceScore> out;
    for (auto& [id, v] : s) {
        out.push_back({id, v, static_cast<std::uint32_t>(out.size() + 1)});
    }
    return out;
}

double score_of(const MergedRun& run, const std::string& doc)
{
    for (const auto& e : run.list.entries) {
        if (e.doc_id == doc) {
            return e.score;
        }
    }
    ADD_FAILURE() << doc << " not in run";
    return NAN;
}

void expect_valid_run(const MergedRun& run)
{
    ASSERT_EQ(run.provenance.size(), run.list.entries.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < run.list.entries.size(); ++i) {
        const auto& e = run.list.entries[i];
        EXPECT_TRUE(seen.insert(e.doc_id).second) << "duplicate " << e.doc_id;
        EXPECT_EQ(e.rank, i + 1);
        EXPECT_TRUE(std::isfinite(e.score));
        if (i) {
            const auto& p = run.list.entries[i - 1];
            EXPECT_TRUE(p.score > e.score || (p.score == e.score && p.doc_id < e.doc_id));
        }
        EXPECT_EQ(run.provenance[i].sources.size(), run.provenance[i].local_scores.size());
        EXPECT_FALSE(run.provenance[i].sources.empty());
    }
    EXPECT_EQ(run.list.source_id, kMergedSource);
}

}  // namespace

TEST(ArtificialScores, ThreeEntries)
{
    auto l = assign_artificial_scores(make_list("S", {{"a", 9}, {"b", 5}, {"c", 1}}), 1.0);
    EXPECT_NEAR(l.entries[0].score, 0.6, 1e-15);
    EXPECT_NEAR(l.entries[1].score, 0.5, 1e-15);
    EXPECT_NEAR(l.entries[2].score, 0.4, 1e-15);
    EXPECT_EQ(l.entries[2].doc_id, "c");
}

TEST(ArtificialScores, FiveEntriesHalfSourceScore)
{
    auto l = assign_artificial_scores(make_list("S", {{"a", 5}, {"b", 4}, {"c", 3}, {"d", 2}, {"e", 1}}), 0.5);
    const double expect[] = {0.30, 0.275, 0.25, 0.225, 0.20};
    for (int i = 0; i < 5; ++i) {
        EXPECT_NEAR(l.entries[i].score, expect[i], 1e-15);
    }
}

TEST(ArtificialScores, SingleEntryGetsTopScore)
{
    auto l = assign_artificial_scores(make_list("S", {{"a", 3}}), 0.8);
    EXPECT_NEAR(l.entries[0].score, 0.48, 1e-15);
}

TEST(ArtificialScores, RejectsEmptyListAndBadSourceScore)
{
    EXPECT_THROW(assign_artificial_scores(make_list("S", {}), 0.5), ValidationError);
    EXPECT_THROW(assign_artificial_scores(make_list("S", {{"a", 1}}), 1.5), ValidationError);
    EXPECT_THROW(assign_artificial_scores(make_list("S", {{"a", 1}}), NAN), ValidationError);
}

TEST(Overlap, Examples)
{
    auto src = make_list("S", {{"d1", 3}, {"d2", 2}, {"d3", 1}});
    EXPECT_TRUE(compute_overlap(src, make_list("C", {{"x", 1}, {"y", 0.5}})).empty());
    EXPECT_EQ(compute_overlap(src, src).size(), 3u);
    auto p = compute_overlap(src, make_list("C", {{"d3", 7}, {"d9", 2}}));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0], (OverlapPair{"d3", 1.0, 7.0, "S"}));
}

TEST(Overlap, FollowsSourceRankOrder)
{
    auto src = make_list("S", {{"d1", 3}, {"d2", 2}, {"d3", 1}});
    auto p = compute_overlap(src, make_list("C", {{"d3", 9}, {"d1", 1}}));
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].doc_id, "d1");
    EXPECT_EQ(p[1].doc_id, "d3");
}

TEST(MinMax, DegenerateInputsMapToOne)
{
    EXPECT_EQ(min_max_normalize(std::vector<double>{4.2}), std::vector<double>{1.0});
    EXPECT_EQ(min_max_normalize(std::vector<double>{2, 2, 2}), (std::vector<double>{1, 1, 1}));
    EXPECT_EQ(min_max_normalize(std::vector<double>{1, 3, 2}), (std::vector<double>{0, 1, 0.5}));
}

TEST(CoriMergeScore, FormulaCases)
{
    EXPECT_EQ(cori_merge_score(1.0, 1.0), 1.0);
    EXPECT_EQ(cori_merge_score(0.0, 0.7), 0.0);
    EXPECT_EQ(cori_merge_score(0.5, 1.0), 0.5);
}

TEST(CoriMergeScore, BoundedAndMonotone)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 1000; ++i) {
        double c = u(rng), a = u(rng), b = u(rng);
        if (a > b) {
            std::swap(a, b);
        }
        EXPECT_GE(cori_merge_score(a, c), 0.0);
        EXPECT_LE(cori_merge_score(b, c), 1.0);
        EXPECT_LE(cori_merge_score(a, c), cori_merge_score(b, c));
    }
}

TEST(CoriMerge, NormalisesPerListAndDedupesByMax)
{
    std::vector<RankedList> lists = {make_list("A", {{"d1", 10}, {"d2", 6}, {"d3", 2}}),
                                     make_list("B", {{"d3", 4}, {"d4", 1}})};
    auto run = cori_merge(lists, scores_for({{"A", 0.9}, {"B", 0.5}}));
    expect_valid_run(run);
    ASSERT_EQ(run.list.size(), 4u);
    EXPECT_DOUBLE_EQ(score_of(run, "d1"), 1.0);            // D'=1, C'=1
    EXPECT_DOUBLE_EQ(score_of(run, "d2"), 0.5);            // D'=0.5, C'=1
    EXPECT_DOUBLE_EQ(score_of(run, "d3"), 1.0 / 1.4);      // max(0 from A, 1/1.4 from B)
    EXPECT_DOUBLE_EQ(score_of(run, "d4"), 0.0);
    const auto& prov = run.provenance[1];
    EXPECT_EQ(run.list.entries[1].doc_id, "d3");
    EXPECT_EQ(prov.sources, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(prov.local_scores, (std::vector<double>{2, 4}));
}

TEST(CoriMerge, SingleDocumentListIsItsSourcesBest)
{
    std::vector<RankedList> lists = {make_list("A", {{"d1", 3}})};
    auto run = cori_merge(lists, scores_for({{"A", 0.7}}));
    EXPECT_DOUBLE_EQ(run.list.entries[0].score, 1.0);
}

TEST(CoriMerge, UnknownSourceIsRejected)
{
    std::vector<RankedList> lists = {make_list("Z", {{"d1", 3}})};
    EXPECT_THROW(cori_merge(lists, scores_for({{"A", 0.7}})), ValidationError);
}

TEST(SslMerge, LineThroughTwoPoints)
{
    std::vector<RankedList> lists = {make_list("A", {{"o1", 0.4}, {"x", 0.3}, {"o2", 0.2}})};
    auto central = make_list("CENTRAL", {{"o1", 0.9}, {"o2", 0.5}});
    MergeOptions opt;
    opt.min_overlap = 2;
    auto run = ssl_merge(lists, central, scores_for({{"A", 0.6}}), opt);
    EXPECT_EQ(run.fallback_sources, 0u);
    EXPECT_NEAR(score_of(run, "x"), 0.7, 1e-5);
    EXPECT_DOUBLE_EQ(score_of(run, "o1"), 0.9);
    EXPECT_DOUBLE_EQ(score_of(run, "o2"), 0.5);
}

TEST(SslMerge, ScaledCentralKeepsLocalOrder)
{
    std::vector<std::pair<std::string, double>> local;
    std::vector<std::pair<std::string, double>> cent;
    for (int i = 0; i < 12; ++i) {
        local.emplace_back("d" + std::to_string(10 + i), 1.0 + 0.37 * i);
        if (i % 3 == 0) {
            cent.emplace_back("d" + std::to_string(10 + i), 3.0 * (1.0 + 0.37 * i));
        }
    }
    std::vector<RankedList> lists = {make_list("A", local)};
    auto run = ssl_merge(lists, make_list("CENTRAL", cent), scores_for({{"A", 0.6}}));
    ASSERT_EQ(run.list.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(run.list.entries[i].doc_id, lists[0].entries[i].doc_id);
    }
}

TEST(SslMerge, NoOverlapFallsBackToCori)
{
    std::vector<RankedList> lists = {make_list("A", {{"d1", 10}, {"d2", 6}}), make_list("B", {{"d3", 4}, {"d4", 1}})};
    auto sc = scores_for({{"A", 0.9}, {"B", 0.5}});
    auto run = ssl_merge(lists, make_list("CENTRAL", {{"zz", 1}}), sc);
    auto cori = cori_merge(lists, sc);
    EXPECT_EQ(run.list, cori.list);
    EXPECT_EQ(run.provenance, cori.provenance);
    EXPECT_EQ(run.fallback_sources, 2u);
}

TEST(SslMerge, PositiveSlopePreservesSourceOrder)
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.1, 10);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<std::string, double>> local, cent;
        const double a = 0.2 + u(rng), b = u(rng) - 5;
        for (int i = 0; i < 30; ++i) {
            const double s = u(rng);
            local.emplace_back("d" + std::to_string(i), s);
            if (i % 4 == 0) {
                cent.emplace_back("d" + std::to_string(i), a * s + b + 0.01 * (u(rng) - 5));
            }
        }
        std::vector<RankedList> lists = {make_list("A", local)};
        auto central = make_list("CENTRAL", cent);
        auto run = ssl_merge(lists, central, scores_for({{"A", 0.6}}));
        // Restricted to non-overlap documents the merged order is the local order.
        std::set<std::string> overlap;
        for (const auto& e : central.entries) {
            overlap.insert(e.doc_id);
        }
        std::vector<std::string> merged, expect;
        for (const auto& e : run.list.entries) {
            if (!overlap.count(e.doc_id)) {
                merged.push_back(e.doc_id);
            }
        }
        for (const auto& e : lists[0].entries) {
            if (!overlap.count(e.doc_id)) {
                expect.push_back(e.doc_id);
            }
        }
        EXPECT_EQ(merged, expect);
    }
}

namespace {

struct RandomQuery {
    std::vector<RankedList> lists;
    RankedList central;
    std::vector<SourceScore> scores;
};

RandomQuery random_query(std::mt19937_64& rng, std::size_t sources)
{
    RandomQuery q;
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> len(0, 25), doc(0, 79);
    std::vector<std::pair<std::string, double>> cent;
    std::set<std::string> in_central;
    for (std::size_t s = 0; s < sources; ++s) {
        const std::string id = "S" + std::to_string(s);
        q.scores.push_back({id, 0.4 + 0.6 * u(rng), 0});
        std::vector<std::pair<std::string, double>> entries;
        std::set<std::string> seen;
        for (int i = 0, n = len(rng); i < n; ++i) {
            const std::string d = "d" + std::to_string(doc(rng));
            if (!seen.insert(d).second) {
                continue;
            }
            entries.emplace_back(d, 5 * u(rng));
            if (u(rng) < 0.3 && in_central.insert(d).second) {
                cent.emplace_back(d, 20 * u(rng));
            }
        }
        q.lists.push_back(make_list(id, entries));
    }
    q.central = make_list("CENTRAL", cent);
    return q;
}

}  // namespace

TEST(MmMerge, LinearIsSsl)
{
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        auto q = random_query(rng, 1 + trial % 6);
        MergeOptions opt;
        opt.seed = 5;
        EXPECT_EQ(mm_merge(q.lists, q.central, q.scores, ModelKind::linear, opt),
                  ssl_merge(q.lists, q.central, q.scores, opt));
    }
}

TEST(MmMerge, ConstantTargetsGiveConstantTreeAndForestPredictions)
{
    std::vector<RankedList> lists = {make_list("A", {{"o1", 5}, {"o2", 4}, {"x", 3.5}, {"o3", 3}, {"y", 1}})};
    auto central = make_list("CENTRAL", {{"o1", 2.5}, {"o2", 2.5}, {"o3", 2.5}});
    for (auto kind : {ModelKind::tree, ModelKind::forest}) {
        auto run = mm_merge(lists, central, scores_for({{"A", 0.5}}), kind);
        EXPECT_EQ(score_of(run, "x"), 2.5);
        EXPECT_EQ(score_of(run, "y"), 2.5);
    }
}

TEST(MmMerge, PolynomialModelsFitQuadraticMaps)
{
    std::vector<std::pair<std::string, double>> local, cent;
    for (int i = 0; i < 10; ++i) {
        const double x = 0.5 + 0.25 * i;
        local.emplace_back("d" + std::to_string(i), x);
        if (i != 4) {
            cent.emplace_back("d" + std::to_string(i), x * x + 1.0);
        }
    }
    std::vector<RankedList> lists = {make_list("A", local)};
    auto central = make_list("CENTRAL", cent);
    auto run = mm_merge(lists, central, scores_for({{"A", 0.5}}), ModelKind::poly2);
    EXPECT_NEAR(score_of(run, "d4"), 1.5 * 1.5 + 1.0, 1e-4);
    auto lin = mm_merge(lists, central, scores_for({{"A", 0.5}}), ModelKind::linear);
    EXPECT_GT(std::abs(score_of(lin, "d4") - 3.25), 1e-2);
}

TEST(MmMerge, OverlapDocumentsKeepCentralScores)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        for (auto kind : {ModelKind::poly3, ModelKind::tree, ModelKind::svr}) {
            auto q = random_query(rng, 4);
            auto run = mm_merge(q.lists, q.central, q.scores, kind);
            std::map<std::string, double> c;
            for (const auto& e : q.central.entries) {
                c[e.doc_id] = e.score;
            }
            // Expected: central score from fitted sources, CORI score from
            // sources below the overlap minimum, maximum over both.
            std::map<std::string, double> expect;
            for (const auto& l : q.lists) {
                const bool fitted = compute_overlap(l, q.central).size() >= 3;
                auto single = cori_merge(std::vector<RankedList>{l}, q.scores);
                for (const auto& e : l.entries) {
                    if (!c.count(e.doc_id)) {
                        continue;
                    }
                    const double v = fitted ? c[e.doc_id] : score_of(single, e.doc_id);
                    auto [it, ins] = expect.emplace(e.doc_id, v);
                    if (!ins) {
                        it->second = std::max(it->second, v);
                    }
                }
            }
            for (const auto& [doc, v] : expect) {
                EXPECT_EQ(score_of(run, doc), v) << doc;
            }
        }
    }
}

TEST(MmMerge, RandomRunsAreValidAndDeterministic)
{
    std::mt19937_64 rng(12);
    const ModelKind kinds[] = {ModelKind::linear, ModelKind::poly2, ModelKind::poly3,
                               ModelKind::tree,   ModelKind::forest, ModelKind::svr};
    for (int trial = 0; trial < 60; ++trial) {
        auto q = random_query(rng, 1 + trial % 8);
        MergeOptions opt;
        opt.seed = trial;
        opt.model.n_trees = 10;
        const auto kind = kinds[trial % 6];
        auto run = mm_merge(q.lists, q.central, q.scores, kind, opt);
        expect_valid_run(run);
        EXPECT_EQ(mm_merge(q.lists, q.central, q.scores, kind, opt), run);
        std::set<std::string> all;
        std::map<std::string, std::size_t> returned_by;
        for (const auto& l : q.lists) {
            for (const auto& e : l.entries) {
                all.insert(e.doc_id);
                ++returned_by[e.doc_id];
            }
        }
        ASSERT_EQ(run.list.size(), all.size());
        for (std::size_t i = 0; i < run.list.size(); ++i) {
            EXPECT_EQ(run.provenance[i].sources.size(), returned_by[run.list.entries[i].doc_id]);
        }
    }
}

TEST(GmFeatures, ZeroExceptReturningSources)
{
    std::vector<SourceScore> sc;
    for (int i = 0; i < 20; ++i) {
        sc.push_back({"S" + std::to_string(100 + i), 0.5, static_cast<std::uint32_t>(i + 1)});
    }
    std::vector<RankedList> lists = {make_list("S103", {{"solo", 5.2}, {"both", 1.0}}),
                                     make_list("S110", {{"both", 2.5}})};
    auto t = build_gm_features(lists, sc);
    ASSERT_EQ(t.layout.size(), 20u);
    std::vector<double> solo(20, 0.0);
    solo[3] = 5.2;
    EXPECT_EQ(t.features.at("solo"), solo);
    std::vector<double> both(20, 0.0);
    both[3] = 1.0;
    both[10] = 2.5;
    EXPECT_EQ(t.features.at("both"), both);
    EXPECT_EQ(t.features.size(), 2u);
}

TEST(GmFeatures, TrainingRowsFollowCentralOrder)
{
    std::vector<RankedList> lists = {make_list("A", {{"d1", 3}, {"d2", 2}}), make_list("B", {{"d3", 1}})};
    auto t = build_gm_features(lists, scores_for({{"A", 0.6}, {"B", 0.5}}));
    auto ts = gm_training_set(t, make_list("CENTRAL", {{"d3", 9}, {"zz", 8}, {"d1", 4}}));
    ASSERT_EQ(ts.size(), 2u);
    EXPECT_EQ(ts.targets(), (std::vector<double>{9, 4}));
    EXPECT_EQ(ts.feature(0, 1), 1.0);
    EXPECT_EQ(ts.feature(1, 0), 3.0);
    EXPECT_EQ(ts.layout, (std::vector<std::string>{"A", "B"}));
}

TEST(GmMerge, TooFewOverlapsFallsBackForWholeQuery)
{
    std::vector<RankedList> lists = {make_list("A", {{"d1", 3}, {"d2", 2}}), make_list("B", {{"d3", 1}})};
    auto sc = scores_for({{"A", 0.6}, {"B", 0.5}});
    auto run = gm_merge(lists, make_list("CENTRAL", {{"d1", 4}}), sc, ModelKind::linear);
    EXPECT_TRUE(run.query_fallback);
    EXPECT_EQ(run.list, cori_merge(lists, sc).list);
}

TEST(GmMerge, MultiSourceDocumentYieldsOneEntry)
{
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        auto q = random_query(rng, 5);
        MergeOptions opt;
        opt.model.n_trees = 5;
        for (auto kind : {ModelKind::linear, ModelKind::forest}) {
            auto run = gm_merge(q.lists, q.central, q.scores, kind, opt);
            expect_valid_run(run);
        }
    }
}

TEST(GmMerge, RecoversAdditiveModel)
{
    // central = 2*s_A + 3*s_B exactly; GM-linear predicts it for unseen docs.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 2);
    std::vector<std::pair<std::string, double>> a, b, cent;
    std::map<std::string, double> truth;
    for (int i = 0; i < 30; ++i) {
        const std::string d = "d" + std::to_string(i);
        double sa = i % 3 != 2 ? u(rng) : 0.0;
        double sb = i % 3 != 0 ? u(rng) : 0.0;
        if (sa > 0) {
            a.emplace_back(d, sa);
        }
        if (sb > 0) {
            b.emplace_back(d, sb);
        }
        truth[d] = 2 * sa + 3 * sb;
        if (i < 20) {
            cent.emplace_back(d, truth[d]);
        }
    }
    std::vector<RankedList> lists = {make_list("A", a), make_list("B", b)};
    auto run = gm_merge(lists, make_list("CENTRAL", cent), scores_for({{"A", 0.6}, {"B", 0.5}}), ModelKind::linear);
    for (int i = 20; i < 30; ++i) {
        const std::string d = "d" + std::to_string(i);
        EXPECT_NEAR(score_of(run, d), truth[d], 1e-4);
    }
}

TEST(Finalize, TruncatesAndRenumbers)
{
    MergedRun run;
    for (int i = 0; i < 250; ++i) {
        run.list.entries.push_back({"d" + std::to_string(1000 + i), 1000.0 - i, static_cast<std::uint32_t>(i + 7)});
        run.provenance.push_back({{"A"}, {1.0}});
    }
    auto cut = finalize(run, 100);
    EXPECT_EQ(cut.list.size(), 100u);
    EXPECT_EQ(cut.provenance.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_EQ(cut.list.entries[i].rank, i + 1);
    }
    run.list.entries.resize(40);
    run.provenance.resize(40);
    EXPECT_EQ(finalize(run, 100).list.size(), 40u);
}
