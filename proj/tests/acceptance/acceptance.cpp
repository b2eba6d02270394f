// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria, so ctest reports any failure.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fedmerge/runner.hpp"
#include "fedmerge/synthetic.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace fedmerge;

namespace {

// Pinned tolerances and budgets.
constexpr double kMetricTol = 1e-12;
constexpr double kMetricBudget = 5.0;
constexpr double kSslBudget = 30.0;
constexpr double kArtificialTol = 1e-12;
constexpr double kCoriBeliefTol = 1e-4;
constexpr double kPlantedTol = 1e-5;
constexpr double kGradientTol = 1e-4;
constexpr double kDirectionalBudget = 600.0;
constexpr int kDirectionalSeeds = 5;
constexpr int kDirectionalNeeded = 4;

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why)
    {
        if (pass) {
            detail = why;
        }
        pass = false;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RankedList ranked(const std::vector<std::string>& ids)
{
    RankedList l;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        l.entries.push_back({ids[i], static_cast<double>(ids.size() - i), static_cast<std::uint32_t>(i + 1)});
    }
    return l;
}

// Brute-force references written straight from the metric definitions.
double brute_ap(const std::vector<std::string>& run, const std::set<std::string>& rel, std::size_t k)
{
    if (rel.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < std::min(k, run.size()); ++i) {
        if (!rel.count(run[i])) {
            continue;
        }
        std::size_t hits = 0;
        for (std::size_t j = 0; j <= i; ++j) {
            hits += rel.count(run[j]);
        }
        sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(rel.size());
}

double brute_recall(const std::vector<std::string>& run, const std::set<std::string>& rel, std::size_t k)
{
    if (rel.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, run.size()); ++i) {
        hits += rel.count(run[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(rel.size());
}

Outcome metric_oracles()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> len(0, 10), nrel(1, 4), kdist(1, 12), pick(0, 14);
    for (int inst = 0; inst < 200; ++inst) {
        std::vector<std::string> pool;
        for (int i = 0; i < 15; ++i) {
            pool.push_back("d" + std::to_string(i));
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::string> run(pool.begin(), pool.begin() + static_cast<long>(len(rng)));
        std::set<std::string> rel;
        for (std::size_t n = nrel(rng); rel.size() < n;) {
            rel.insert(pool[pick(rng)]);
        }
        const std::size_t k = kdist(rng);
        const auto l = ranked(run);
        if (std::abs(average_precision(l, rel, k) - brute_ap(run, rel, k)) > kMetricTol) {
            o.fail(fmt::format("AP mismatch on instance {}", inst));
        }
        if (std::abs(recall_at(l, rel, k) - brute_recall(run, rel, k)) > kMetricTol) {
            o.fail(fmt::format("recall mismatch on instance {}", inst));
        }
    }
    struct PresCase {
        std::vector<std::string> run;
        std::set<std::string> rel;
        double expect;
    };
    const std::vector<PresCase> cases = {
        {{"a", "b"}, {"a", "b"}, 1.0},
        {{"x"}, {"a", "b"}, 0.0},
        {{"a", "x"}, {"a", "b"}, 0.505},
        // r = {2}, missing at 101: 1 - (103/2 - 1.5) / 100
        {{"x", "a"}, {"a", "b"}, 0.5},
        // n = 1, r = {3}: 1 - (3 - 1) / 100
        {{"x", "y", "a"}, {"a"}, 0.98},
    };
    for (const auto& c : cases) {
        if (std::abs(pres_at(ranked(c.run), c.rel, 100) - c.expect) > kMetricTol) {
            o.fail(fmt::format("PRES case expected {}", c.expect));
        }
    }
    const double t = seconds_since(t0);
    if (t >= kMetricBudget) {
        o.fail(fmt::format("took {:.2f}s", t));
    }
    if (o.pass) {
        o.detail = fmt::format("200 instances + {} PRES cases in {:.3f}s", cases.size(), t);
    }
    return o;
}

double kendall_tau(const std::vector<double>& truth)
{
    // truth[i] is the centralized score of the document at merged rank i.
    long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t j = i + 1; j < truth.size(); ++j) {
            (truth[i] > truth[j] ? concordant : discordant) += 1;
        }
    }
    const long pairs = concordant + discordant;
    return pairs == 0 ? 1.0 : static_cast<double>(concordant - discordant) / static_cast<double>(pairs);
}

Outcome ssl_recovery()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> slope(0.05, 20.0), shift(-50.0, 50.0), u(0.0, 1.0);
    double worst = 1.0;
    for (int q = 0; q < 50; ++q) {
        const int sources = 3 + q % 6;
        std::vector<double> central_scores(static_cast<std::size_t>(sources * 15));
        for (std::size_t i = 0; i < central_scores.size(); ++i) {
            central_scores[i] = static_cast<double>(i + 1);
        }
        std::shuffle(central_scores.begin(), central_scores.end(), rng);
        std::map<std::string, double> truth;
        std::vector<RankedList> lists;
        std::vector<std::pair<std::string, double>> central;
        std::vector<SourceScore> scores;
        std::size_t next = 0;
        for (int s = 0; s < sources; ++s) {
            const double a = slope(rng), b = shift(rng);
            const std::string sid = fmt::format("S{:02d}", s);
            std::vector<std::pair<std::string, double>> local;
            for (int d = 0; d < 15; ++d) {
                const std::string id = fmt::format("q{}s{}d{}", q, s, d);
                const double g = central_scores[next++];
                truth[id] = g;
                local.emplace_back(id, a * g + b);
                if (d < 4 || u(rng) < 0.2) {
                    central.emplace_back(id, g);
                }
            }
            lists.push_back(fedmerge::testing::make_list(sid, local));
            scores.push_back({sid, 0.5 + 0.01 * s, static_cast<std::uint32_t>(s + 1)});
        }
        std::sort(scores.begin(), scores.end(), [](const auto& x, const auto& y) { return x.score > y.score; });
        for (std::size_t i = 0; i < scores.size(); ++i) {
            scores[i].rank = static_cast<std::uint32_t>(i + 1);
        }
        auto run = ssl_merge(lists, fedmerge::testing::make_list("CENTRAL", central), scores);
        std::vector<double> order;
        for (const auto& e : run.list.entries) {
            order.push_back(truth.at(e.doc_id));
        }
        if (run.fallback_sources != 0) {
            o.fail(fmt::format("query {} fell back for {} sources", q, run.fallback_sources));
        }
        if (order.size() != truth.size()) {
            o.fail(fmt::format("query {} returned {} of {} documents", q, order.size(), truth.size()));
        }
        worst = std::min(worst, kendall_tau(order));
    }
    if (worst != 1.0) {
        o.fail(fmt::format("minimum Kendall tau {:.6f}", worst));
    }
    const double t = seconds_since(t0);
    if (t >= kSslBudget) {
        o.fail(fmt::format("took {:.2f}s", t));
    }
    if (o.pass) {
        o.detail = fmt::format("50 queries, Kendall tau 1.0, {:.3f}s", t);
    }
    return o;
}

ExperimentInputs synthetic_inputs(const SyntheticParams& p)
{
    auto data = generate_synthetic(p);
    ExperimentInputs in;
    in.corpus = CollectionSet::from_documents(data.docs);
    in.topics = std::move(data.topics);
    in.qrels = std::move(data.qrels);
    return in;
}

std::string run_bytes(const StrategyOutcome& outcome)
{
    std::ostringstream out;
    for (const auto& [q, run] : outcome.runs) {
        write_run(run.list, out, "merged");
    }
    return out.str();
}

Outcome mm_linear_is_ssl()
{
    Outcome o;
    SyntheticParams p;
    p.collections = 12;
    p.docs = 2400;
    p.topics = 20;
    p.seed = 3;
    const auto in = synthetic_inputs(p);
    ExperimentConfig c;
    c.n_select = 8;
    c.sampling.target_size = 60;
    c.strategies = {Strategy::ssl, Strategy::mm_linear};
    c.modes = {Mode::cooperative, Mode::uncooperative};
    c.distortion = "nonlinear";
    const auto report = run_experiment(in, c);
    std::size_t bytes = 0;
    for (auto m : c.modes) {
        const auto a = run_bytes(report.outcome(Strategy::ssl, m));
        const auto b = run_bytes(report.outcome(Strategy::mm_linear, m));
        if (a != b) {
            o.fail(fmt::format("{} run files differ", to_string(m)));
        }
        if (report.outcome(Strategy::ssl, m).runs.size() != 20) {
            o.fail("expected 20 queries");
        }
        bytes += a.size();
    }
    if (o.pass) {
        o.detail = fmt::format("20 queries x 2 modes, {} identical bytes", bytes);
    }
    return o;
}

Outcome artificial_scores()
{
    Outcome o;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int s = 0; s < 25; ++s) {
        const double src = u(rng);
        for (std::size_t m = 1; m <= 200; ++m) {
            std::vector<std::pair<std::string, double>> items;
            for (std::size_t i = 0; i < m; ++i) {
                items.emplace_back(fmt::format("d{:03d}", i), static_cast<double>(m - i));
            }
            const auto l = assign_artificial_scores(fedmerge::testing::make_list("S", items), src);
            const auto& e = l.entries;
            if (e.size() != m || std::abs(e.front().score - 0.6 * src) > kArtificialTol) {
                o.fail(fmt::format("m={} first score {}", m, e.front().score));
            }
            if (m == 1) {
                continue;  // a single entry scores 0.6 x source
            }
            if (std::abs(e.back().score - 0.4 * src) > kArtificialTol) {
                o.fail(fmt::format("m={} last score {}", m, e.back().score));
            }
            const double step = e[0].score - e[1].score;
            for (std::size_t i = 1; i < m; ++i) {
                if (std::abs((e[i - 1].score - e[i].score) - step) > kArtificialTol) {
                    o.fail(fmt::format("m={} uneven step at rank {}", m, i + 1));
                }
            }
        }
    }
    if (o.pass) {
        o.detail = "lengths 1-200 x 25 source scores";
    }
    return o;
}

Outcome cori_formulas()
{
    Outcome o;
    const double p = cori_belief(50, 1000, 1000, 3, 1);
    if (std::abs(p - 0.5084) > kCoriBeliefTol) {
        o.fail(fmt::format("belief {:.6f}", p));
    }
    const double merged = cori_merge_score(0.5, 1.0);
    if (merged != 0.5) {
        o.fail(fmt::format("merge value {:.17g}", merged));
    }
    if (o.pass) {
        o.detail = fmt::format("belief {:.6f}, merge {}", p, merged);
    }
    return o;
}

std::size_t leaf_of(const TreeModel& tree, std::span<const double> x)
{
    std::size_t n = 0;
    while (tree.nodes[n].feature >= 0) {
        const auto& node = tree.nodes[n];
        n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                  : node.right);
    }
    return n;
}

Outcome regressors()
{
    Outcome o;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);

    TrainingSet ts(3);
    for (int i = 0; i < 120; ++i) {
        std::vector<double> x = {u(rng), u(rng), u(rng)};
        ts.add(x, std::sin(3 * x[0]) + x[1] * x[2] + 0.1 * g(rng));
    }
    const auto tree = fit_tree(ts, TreeParams{}, 9);
    ForestParams fp;
    fp.n_trees = 1;
    fp.bootstrap = false;
    fp.feature_frac = 1.0;
    const auto forest = fit_forest(ts, fp, 9);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> x = {u(rng), u(rng), u(rng)};
        if (tree.model.predict(x) != forest.model.predict(x)) {
            o.fail("forest(1 tree, no bootstrap) differs from tree");
            break;
        }
    }

    const auto& tm = std::get<TreeModel>(tree.model.params());
    std::map<std::size_t, std::pair<double, std::size_t>> leaves;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        std::vector<double> x(ts.dim());
        for (std::size_t j = 0; j < ts.dim(); ++j) {
            x[j] = ts.feature(i, j);
        }
        auto& acc = leaves[leaf_of(tm, x)];
        acc.first += ts.targets()[i];
        acc.second += 1;
    }
    for (const auto& [leaf, acc] : leaves) {
        const double mean = acc.first / static_cast<double>(acc.second);
        if (std::abs(tm.nodes[leaf].value - mean) > 1e-12 * std::max(1.0, std::abs(mean))) {
            o.fail(fmt::format("leaf {} predicts {} but its targets average {}", leaf, tm.nodes[leaf].value, mean));
        }
    }

    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 4);
        std::vector<double> w(d);
        for (auto& wi : w) {
            wi = 5 * u(rng);
        }
        const double b = 5 * u(rng);
        TrainingSet lin(d);
        for (int i = 0; i < 40; ++i) {
            std::vector<double> x(d);
            double y = b;
            for (std::size_t j = 0; j < d; ++j) {
                x[j] = 10 * u(rng);
                y += w[j] * x[j];
            }
            lin.add(x, y);
        }
        const auto fit = fit_linear(lin);
        const auto& m = std::get<LinearModel>(fit.model.params());
        for (std::size_t j = 0; j < d; ++j) {
            if (std::abs(m.weights[j] - w[j]) > kPlantedTol) {
                o.fail(fmt::format("planted weight {} recovered as {}", w[j], m.weights[j]));
            }
        }
        if (std::abs(m.intercept - b) > kPlantedTol) {
            o.fail(fmt::format("planted intercept {} recovered as {}", b, m.intercept));
        }
    }

    std::uniform_int_distribution<std::size_t> width(1, 6), depth(1, 3), batch(1, 5);
    double worst = 0.0;
    for (int net_i = 0; net_i < 20; ++net_i) {
        std::vector<std::size_t> layers = {width(rng)};
        for (std::size_t i = 0, n = depth(rng); i < n; ++i) {
            layers.push_back(width(rng));
        }
        layers.push_back(1);
        MlpNetwork net(layers, rng());
        for (auto& p : net.parameters()) {
            p += 0.1 * g(rng);
        }
        const auto n = static_cast<Eigen::Index>(batch(rng));
        Eigen::MatrixXd x(static_cast<Eigen::Index>(layers[0]), n);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x.data()[i] = g(rng);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            y(i) = g(rng);
        }
        std::vector<double> grad(net.parameter_count());
        net.loss_and_gradient(x, y, grad);
        const double h = 1e-6;
        for (std::size_t k = 0; k < net.parameter_count(); ++k) {
            auto p = net.parameters();
            const double orig = p[k];
            p[k] = orig + h;
            const double up = net.loss(x, y);
            p[k] = orig - h;
            const double down = net.loss(x, y);
            p[k] = orig;
            const double fd = (up - down) / (2 * h);
            const double rel = std::abs(fd - grad[k]) / std::max({1.0, std::abs(fd), std::abs(grad[k])});
            worst = std::max(worst, rel);
        }
    }
    if (worst > kGradientTol) {
        o.fail(fmt::format("MLP gradient relative error {:.3g}", worst));
    }
    if (o.pass) {
        o.detail = fmt::format("{} leaves checked, MLP worst relative error {:.2g}", leaves.size(), worst);
    }
    return o;
}

Outcome directional()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    int held = 0;
    std::string log;
    for (int s = 1; s <= kDirectionalSeeds; ++s) {
        SyntheticParams p;
        p.collections = 24;
        p.docs = 9600;
        p.topics = 50;
        p.seed = static_cast<std::uint64_t>(s);
        const auto in = synthetic_inputs(p);
        ExperimentConfig c;
        c.seed = static_cast<std::uint64_t>(s);
        c.sampling.target_size = 60;
        c.distortion = "nonlinear";
        c.modes = {Mode::cooperative};
        c.strategies = {Strategy::cori, Strategy::ssl, Strategy::mm_poly2, Strategy::mm_poly3, Strategy::mm_forest};
        const auto r = run_experiment(in, c);
        auto ev = [&](Strategy st) { return r.outcome(st, Mode::cooperative).eval; };
        const auto forest = ev(Strategy::mm_forest);
        const auto ssl = ev(Strategy::ssl);
        bool ok = true;
        for (auto base : {Strategy::cori, Strategy::mm_poly2, Strategy::mm_poly3}) {
            const auto b = ev(base);
            ok = ok && forest.map >= b.map && forest.recall >= b.recall;
        }
        for (auto poly : {Strategy::mm_poly2, Strategy::mm_poly3}) {
            const auto b = ev(poly);
            ok = ok && ssl.map >= b.map && ssl.recall >= b.recall;
        }
        held += ok ? 1 : 0;
        log += fmt::format(" s{}:{}(forest {:.4f}/{:.4f} cori {:.4f}/{:.4f})", s, ok ? "ok" : "no", forest.map,
                           forest.recall, ev(Strategy::cori).map, ev(Strategy::cori).recall);
    }
    const double t = seconds_since(t0);
    if (held < kDirectionalNeeded) {
        o.fail(fmt::format("held on {}/{} seeds;{}", held, kDirectionalSeeds, log));
    }
    if (t >= kDirectionalBudget) {
        o.fail(fmt::format("took {:.1f}s", t));
    }
    if (o.pass) {
        o.detail = fmt::format("held on {}/{} seeds in {:.1f}s;{}", held, kDirectionalSeeds, t, log);
    }
    return o;
}

std::map<std::string, std::string> deterministic_files(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "timing.txt") {
            continue;
        }
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return out;
}

Outcome determinism()
{
    Outcome o;
    fedmerge::testing::TempDir tmp("acceptance-determinism");
    SyntheticParams p;
    p.collections = 10;
    p.docs = 1500;
    p.topics = 12;
    p.seed = 8;
    const auto in = synthetic_inputs(p);
    ExperimentConfig c;
    c.n_select = 6;
    c.sampling.target_size = 40;
    c.strategies = all_strategies();
    c.modes = {Mode::cooperative, Mode::uncooperative};
    c.model.n_trees = 20;
    c.model.mlp_hidden = {16, 8};
    c.model.mlp_epochs = 30;
    c.seed = 8;

    const int saved = omp_get_max_threads();
    std::vector<std::map<std::string, std::string>> outputs;
    const std::vector<std::pair<bool, int>> setups = {{true, 3}, {true, 3}, {false, 1}};
    for (std::size_t i = 0; i < setups.size(); ++i) {
        c.parallel = setups[i].first;
        omp_set_num_threads(setups[i].second);
        const auto dir = tmp.path() / std::to_string(i);
        write_report(run_experiment(in, c), dir.string());
        outputs.push_back(deterministic_files(dir));
    }
    omp_set_num_threads(saved);
    if (outputs[0] != outputs[1]) {
        o.fail("two parallel runs differ");
    }
    if (outputs[0] != outputs[2]) {
        o.fail("parallel and serial runs differ");
    }
    if (o.pass) {
        o.detail = fmt::format("{} files identical across 2 parallel runs and 1 serial run", outputs[0].size());
    }
    return o;
}

Outcome gm_features()
{
    Outcome o;
    SyntheticParams p;
    p.collections = 12;
    p.docs = 2400;
    p.topics = 10;
    p.seed = 9;
    const auto in = synthetic_inputs(p);
    ExperimentConfig c;
    c.n_select = 10;
    c.sampling.target_size = 80;
    c.strategies = {Strategy::gm_linear};
    c.modes = {Mode::cooperative, Mode::uncooperative};
    const auto r = run_experiment(in, c);
    std::size_t audited = 0;
    for (const auto& trace : r.traces) {
        for (auto mode : c.modes) {
            const auto lists = local_lists(trace, mode, c);
            const auto table = build_gm_features(lists, trace.selected);
            std::map<std::string, std::set<std::string>> returned_by;
            for (const auto& l : lists) {
                for (const auto& e : l.entries) {
                    returned_by[e.doc_id].insert(l.source_id);
                }
            }
            for (const auto& e : trace.central.entries) {
                auto it = returned_by.find(e.doc_id);
                if (it == returned_by.end()) {
                    continue;
                }
                const auto& f = table.features.at(e.doc_id);
                for (std::size_t j = 0; j < table.layout.size(); ++j) {
                    if ((f[j] != 0.0) != (it->second.count(table.layout[j]) > 0)) {
                        o.fail(fmt::format("{} {} position {}", trace.query_id, e.doc_id, j));
                    }
                }
                ++audited;
            }
        }
    }
    if (audited == 0) {
        o.fail("no overlap documents to audit");
    }
    if (o.pass) {
        o.detail = fmt::format("{} overlap documents over {} traced queries", audited, r.traces.size());
    }
    return o;
}

}  // namespace

int main()
{
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric oracles", metric_oracles},
        {"ssl exact recovery", ssl_recovery},
        {"mm-linear equals ssl", mm_linear_is_ssl},
        {"artificial scores", artificial_scores},
        {"cori formulas", cori_formulas},
        {"regressor correctness", regressors},
        {"forest beats cori and polynomials", directional},
        {"end-to-end determinism", determinism},
        {"gm feature audit", gm_features},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        failed += o.pass ? 0 : 1;
        std::cout << fmt::format("{} {} {}: {}", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail)
                  << std::endl;
    }
    return failed;
}
