#include "fedmerge/runner.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <omp.h>
#include <spdlog/spdlog.h>

#include "fedmerge/synthetic.hpp"
#include "fedmerge/text.hpp"

namespace fedmerge {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Names

std::string_view to_string(Mode mode) noexcept
{
    return mode == Mode::cooperative ? "cooperative" : "uncooperative";
}

std::string_view to_string(Strategy s) noexcept
{
    switch (s) {
    case Strategy::cori: return "cori";
    case Strategy::ssl: return "ssl";
    case Strategy::mm_linear: return "mm-linear";
    case Strategy::mm_poly2: return "mm-poly2";
    case Strategy::mm_poly3: return "mm-poly3";
    case Strategy::mm_tree: return "mm-tree";
    case Strategy::mm_forest: return "mm-forest";
    case Strategy::mm_svr: return "mm-svr";
    case Strategy::gm_linear: return "gm-linear";
    case Strategy::gm_tree: return "gm-tree";
    case Strategy::gm_forest: return "gm-forest";
    case Strategy::gm_svr: return "gm-svr";
    case Strategy::gm_mlp: return "gm-mlp";
    case Strategy::centralized: return "centralized";
    }
    return "unknown";
}

std::vector<Strategy> all_strategies()
{
    return {Strategy::cori,      Strategy::ssl,       Strategy::mm_linear, Strategy::mm_poly2, Strategy::mm_poly3,
            Strategy::mm_tree,   Strategy::mm_forest, Strategy::mm_svr,    Strategy::gm_linear, Strategy::gm_tree,
            Strategy::gm_forest, Strategy::gm_svr,    Strategy::gm_mlp,    Strategy::centralized};
}

Mode parse_mode(std::string_view name)
{
    if (name == "cooperative") {
        return Mode::cooperative;
    }
    if (name == "uncooperative") {
        return Mode::uncooperative;
    }
    throw ConfigError("unknown mode '" + std::string(name) + "'");
}

Strategy parse_strategy(std::string_view name)
{
    for (auto s : all_strategies()) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

const StrategyOutcome& RunReport::outcome(Strategy s, Mode m) const
{
    for (const auto& o : outcomes) {
        if (o.strategy == s && o.mode == m) {
            return o;
        }
    }
    throw ValidationError("report has no " + std::string(to_string(s)) + "/" + std::string(to_string(m)) + " result");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim_copy(std::string_view s)
{
    const auto* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    return std::string(s.substr(b, s.find_last_not_of(ws) - b + 1));
}

std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        auto item = trim_copy(s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start));
        if (!item.empty()) {
            out.push_back(item);
        }
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::size_t to_count(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        auto n = std::stoull(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument(v);
        }
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

double to_real(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_flag(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "on" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "off" || v == "no") {
        return false;
    }
    throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::string join_counts(const std::vector<std::size_t>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path);
    }
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim_copy(line).empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path, lineno, "expected key=value");
        }
        auto key = trim_copy(std::string_view(line).substr(0, eq));
        if (key.empty()) {
            throw ParseError(path, lineno, "empty key");
        }
        kv[key] = trim_copy(std::string_view(line).substr(eq + 1));
    }
    return kv;
}

ExperimentConfig config_from_kv(const std::map<std::string, std::string>& kv)
{
    ExperimentConfig c;
    for (const auto& [key, v] : kv) {
        if (key == "corpus") {
            c.corpus_path = v;
        } else if (key == "topics") {
            c.topics_path = v;
        } else if (key == "qrels") {
            c.qrels_path = v;
        } else if (key == "mode") {
            c.modes.clear();
            for (const auto& m : split_list(v)) {
                if (m == "both") {
                    c.modes = {Mode::cooperative, Mode::uncooperative};
                } else {
                    c.modes.push_back(parse_mode(m));
                }
            }
        } else if (key == "strategy") {
            c.strategies.clear();
            for (const auto& s : split_list(v)) {
                if (s == "all") {
                    c.strategies = all_strategies();
                } else {
                    c.strategies.push_back(parse_strategy(s));
                }
            }
        } else if (key == "select") {
            c.n_select = to_count(key, v);
        } else if (key == "cutoff") {
            c.cutoff = to_count(key, v);
        } else if (key == "k") {
            c.k = to_count(key, v);
        } else if (key == "central_k") {
            c.central_k = to_count(key, v);
        } else if (key == "sample_size") {
            c.sampling.target_size = to_count(key, v);
        } else if (key == "docs_per_query") {
            c.sampling.docs_per_query = to_count(key, v);
        } else if (key == "desc_word_limit") {
            c.query_limits.desc_word_limit = to_count(key, v);
        } else if (key == "query_word_limit") {
            c.query_limits.total_word_limit = to_count(key, v);
        } else if (key == "seed") {
            c.seed = to_count(key, v);
        } else if (key == "min_overlap") {
            c.min_overlap = to_count(key, v);
        } else if (key == "gm_min_overlap") {
            c.gm_min_overlap = to_count(key, v);
        } else if (key == "selection_stats") {
            if (v != "sample" && v != "full") {
                throw ConfigError("selection_stats must be 'sample' or 'full'");
            }
            c.full_stats = v == "full";
        } else if (key == "distortion") {
            if (v != "none" && v != "nonlinear") {
                throw ConfigError("distortion must be 'none' or 'nonlinear'");
            }
            c.distortion = v;
        } else if (key == "parallel") {
            c.parallel = to_flag(key, v);
        } else if (key == "threads") {
            c.threads = to_count(key, v);
        } else if (key == "cache") {
            c.cache_dir = v;
        } else if (key == "out") {
            c.out_dir = v;
        } else if (key == "field.doc_id") {
            c.fields.doc_id = v;
        } else if (key == "field.topic_id") {
            c.fields.topic_id = v;
        } else if (key == "field.title") {
            c.fields.title = v;
        } else if (key == "field.abstract") {
            c.fields.abstract_text = v;
        } else if (key == "field.description") {
            c.fields.description = v;
        } else if (key == "field.claims") {
            c.fields.claims = v;
        } else if (key == "field.codes") {
            c.fields.codes = v;
        } else if (key == "model.ridge") {
            c.model.ridge = to_real(key, v);
        } else if (key == "model.max_depth") {
            c.model.max_depth = to_count(key, v);
        } else if (key == "model.min_leaf") {
            c.model.min_leaf = to_count(key, v);
        } else if (key == "model.n_trees") {
            c.model.n_trees = to_count(key, v);
        } else if (key == "model.bootstrap") {
            c.model.bootstrap = to_flag(key, v);
        } else if (key == "model.feature_frac") {
            c.model.feature_frac = v == "auto" ? std::nullopt : std::optional<double>(to_real(key, v));
        } else if (key == "model.svr_epsilon") {
            c.model.svr_epsilon = to_real(key, v);
        } else if (key == "model.svr_c") {
            c.model.svr_c = to_real(key, v);
        } else if (key == "model.svr_epochs") {
            c.model.svr_epochs = to_count(key, v);
        } else if (key == "model.mlp_hidden") {
            c.model.mlp_hidden.clear();
            for (const auto& h : split_list(v)) {
                c.model.mlp_hidden.push_back(to_count(key, h));
            }
        } else if (key == "model.mlp_lr") {
            c.model.mlp_lr = to_real(key, v);
        } else if (key == "model.mlp_epochs") {
            c.model.mlp_epochs = to_count(key, v);
        } else if (key == "model.mlp_batch") {
            c.model.mlp_batch = to_count(key, v);
        } else if (key == "model.mlp_patience") {
            c.model.mlp_patience = to_count(key, v);
        } else if (key == "model.mlp_min_improvement") {
            c.model.mlp_min_improvement = to_real(key, v);
        } else {
            throw ConfigError("unknown configuration key '" + key + "'");
        }
    }
    if (c.modes.empty() || c.strategies.empty()) {
        throw ConfigError("at least one mode and one strategy are required");
    }
    if (c.n_select == 0 || c.cutoff == 0 || c.k == 0 || c.central_k == 0 || c.sampling.target_size == 0 ||
        c.sampling.docs_per_query == 0) {
        throw ConfigError("select, cutoff, k, central_k, sample_size and docs_per_query must be positive");
    }
    return c;
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c)
{
    std::map<std::string, std::string> kv;
    std::string modes, strategies;
    for (auto m : c.modes) {
        modes += (modes.empty() ? "" : ",") + std::string(to_string(m));
    }
    for (auto s : c.strategies) {
        strategies += (strategies.empty() ? "" : ",") + std::string(to_string(s));
    }
    kv["corpus"] = c.corpus_path;
    kv["topics"] = c.topics_path;
    kv["qrels"] = c.qrels_path;
    kv["mode"] = modes;
    kv["strategy"] = strategies;
    kv["select"] = std::to_string(c.n_select);
    kv["cutoff"] = std::to_string(c.cutoff);
    kv["k"] = std::to_string(c.k);
    kv["central_k"] = std::to_string(c.central_k);
    kv["sample_size"] = std::to_string(c.sampling.target_size);
    kv["docs_per_query"] = std::to_string(c.sampling.docs_per_query);
    kv["desc_word_limit"] = std::to_string(c.query_limits.desc_word_limit);
    kv["query_word_limit"] = std::to_string(c.query_limits.total_word_limit);
    kv["seed"] = std::to_string(c.seed);
    kv["min_overlap"] = std::to_string(c.min_overlap);
    kv["gm_min_overlap"] = std::to_string(c.gm_min_overlap);
    kv["selection_stats"] = c.full_stats ? "full" : "sample";
    kv["distortion"] = c.distortion;
    kv["field.doc_id"] = c.fields.doc_id;
    kv["field.topic_id"] = c.fields.topic_id;
    kv["field.title"] = c.fields.title;
    kv["field.abstract"] = c.fields.abstract_text;
    kv["field.description"] = c.fields.description;
    kv["field.claims"] = c.fields.claims;
    kv["field.codes"] = c.fields.codes;
    kv["model.ridge"] = fmt::format("{}", c.model.ridge);
    kv["model.max_depth"] = std::to_string(c.model.max_depth);
    kv["model.min_leaf"] = std::to_string(c.model.min_leaf);
    kv["model.n_trees"] = std::to_string(c.model.n_trees);
    kv["model.bootstrap"] = c.model.bootstrap ? "true" : "false";
    kv["model.feature_frac"] = c.model.feature_frac ? fmt::format("{}", *c.model.feature_frac) : "auto";
    kv["model.svr_epsilon"] = fmt::format("{}", c.model.svr_epsilon);
    kv["model.svr_c"] = fmt::format("{}", c.model.svr_c);
    kv["model.svr_epochs"] = std::to_string(c.model.svr_epochs);
    kv["model.mlp_hidden"] = join_counts(c.model.mlp_hidden);
    kv["model.mlp_lr"] = fmt::format("{}", c.model.mlp_lr);
    kv["model.mlp_epochs"] = std::to_string(c.model.mlp_epochs);
    kv["model.mlp_batch"] = std::to_string(c.model.mlp_batch);
    kv["model.mlp_patience"] = std::to_string(c.model.mlp_patience);
    kv["model.mlp_min_improvement"] = fmt::format("{}", c.model.mlp_min_improvement);
    // parallel, threads, cache and out do not affect results and are left out
    // so reports from serial and parallel runs are identical.
    return {kv.begin(), kv.end()};
}

// ---------------------------------------------------------------------------
// Inputs and federation

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::string hex(std::uint64_t v)
{
    return fmt::format("{:016x}", v);
}

class Stopwatch {
  public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

ExperimentInputs load_inputs(const ExperimentConfig& config)
{
    ExperimentInputs in;
    stage("load", [&] {
        if (config.corpus_path.empty() || config.topics_path.empty() || config.qrels_path.empty()) {
            throw ConfigError("corpus, topics and qrels paths are required");
        }
        auto corpus = load_corpus(config.corpus_path, config.fields);
        for (const auto& e : corpus.errors) {
            spdlog::warn("{}:{}: {}", config.corpus_path, e.line, e.message);
        }
        in.corpus = std::move(corpus.collections);
        in.corpus_record_errors = corpus.errors.size();
        auto topics = load_topics(config.topics_path, config.fields);
        for (const auto& e : topics.errors) {
            spdlog::warn("{}:{}: {}", config.topics_path, e.line, e.message);
        }
        in.topics = std::move(topics.topics);
        in.topic_record_errors = topics.errors.size();
        in.qrels = load_qrels(config.qrels_path);
        if (in.corpus.size() == 0) {
            throw ValidationError("corpus has no valid documents");
        }
        return 0;
    });
    spdlog::info("loaded {} documents in {} collections, {} topics", in.corpus.corpus().size(), in.corpus.size(),
                 in.topics.size());
    return in;
}

std::map<std::string, Index> build_collection_indexes(const CollectionSet& corpus, bool parallel)
{
    const auto codes = corpus.codes();
    std::vector<Index> built(codes.size());
    const auto n = static_cast<std::ptrdiff_t>(codes.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        built[i] = build_collection_index(corpus, corpus.members(codes[i]));
    }
    std::map<std::string, Index> out;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        out.emplace(codes[i], std::move(built[i]));
    }
    return out;
}

namespace {

Index build_full_index(const CollectionSet& corpus)
{
    std::vector<std::string> ids;
    ids.reserve(corpus.corpus().size());
    for (const auto& [id, doc] : corpus.corpus()) {
        ids.push_back(id);
    }
    return build_collection_index(corpus, ids);
}

bool try_load_indexes(const fs::path& dir, const CollectionSet& corpus, Federation& fed)
{
    if (!fs::exists(dir / "full.idx")) {
        return false;
    }
    try {
        std::map<std::string, Index> indexes;
        for (const auto& code : corpus.codes()) {
            indexes.emplace(code, load_index((dir / (code + ".idx")).string()));
        }
        fed.full_index = load_index((dir / "full.idx").string());
        fed.indexes = std::move(indexes);
        return true;
    } catch (const Error& e) {
        spdlog::warn("ignoring unusable index cache {}: {}", dir.string(), e.what());
        return false;
    }
}

}  // namespace

Federation build_federation(const CollectionSet& corpus, const ExperimentConfig& config)
{
    Federation fed;
    const auto digest = corpus_digest(corpus);
    fs::path index_cache, sample_cache;
    if (!config.cache_dir.empty()) {
        index_cache = fs::path(config.cache_dir) / ("index-" + hex(digest));
        const auto key = fnv1a(fmt::format("{}:{}:{}:{}", digest, config.sampling.target_size,
                                           config.sampling.docs_per_query, config.seed));
        sample_cache = fs::path(config.cache_dir) / ("samples-" + hex(key) + ".txt");
    }

    stage("index", [&] {
        if (!index_cache.empty() && try_load_indexes(index_cache, corpus, fed)) {
            spdlog::info("loaded indexes from {}", index_cache.string());
            return 0;
        }
        fed.indexes = build_collection_indexes(corpus, config.parallel);
        fed.full_index = build_full_index(corpus);
        if (!index_cache.empty()) {
            fs::create_directories(index_cache);
            for (const auto& [code, index] : fed.indexes) {
                save_index(index, (index_cache / (code + ".idx")).string());
            }
            save_index(fed.full_index, (index_cache / "full.idx").string());
        }
        return 0;
    });

    stage("sample", [&] {
        if (!sample_cache.empty() && fs::exists(sample_cache)) {
            try {
                fed.samples = load_samples(sample_cache.string());
                spdlog::info("loaded samples from {}", sample_cache.string());
            } catch (const Error& e) {
                spdlog::warn("ignoring unusable sample cache: {}", e.what());
                fed.samples.clear();
            }
        }
        if (fed.samples.size() != fed.indexes.size()) {
            fed.samples = sample_collections(fed.indexes, config.sampling, config.seed, config.parallel);
            if (!sample_cache.empty()) {
                fs::create_directories(sample_cache.parent_path());
                save_samples(fed.samples, sample_cache.string());
            }
        }
        fed.central = build_central_index(fed.samples, corpus);
        return 0;
    });

    stage("stats", [&] {
        fed.stats = config.full_stats ? build_full_stats(corpus) : build_stats(fed.samples, corpus);
        return 0;
    });
    spdlog::info("central sample index holds {} documents", fed.central.index.doc_count());
    return fed;
}

// ---------------------------------------------------------------------------
// Per-query pipeline

std::vector<RankedList> local_lists(const QueryTrace& trace, Mode mode, const ExperimentConfig& config)
{
    std::vector<RankedList> out;
    out.reserve(trace.source_lists.size());
    for (std::size_t i = 0; i < trace.source_lists.size(); ++i) {
        const auto& list = trace.source_lists[i];
        if (list.empty()) {
            continue;
        }
        if (mode == Mode::uncooperative) {
            out.push_back(assign_artificial_scores(list, trace.selected.at(i).score));
        } else if (config.distortion == "nonlinear") {
            RankedList d = list;
            const auto g = make_distortion(list.source_id, config.seed);
            for (auto& e : d.entries) {
                e.score = g.apply(e.score);
            }
            sort_and_rank(d.entries);
            out.push_back(std::move(d));
        } else {
            out.push_back(list);
        }
    }
    return out;
}

namespace {

std::optional<ModelKind> model_of(Strategy s)
{
    switch (s) {
    case Strategy::mm_linear:
    case Strategy::gm_linear: return ModelKind::linear;
    case Strategy::mm_poly2: return ModelKind::poly2;
    case Strategy::mm_poly3: return ModelKind::poly3;
    case Strategy::mm_tree:
    case Strategy::gm_tree: return ModelKind::tree;
    case Strategy::mm_forest:
    case Strategy::gm_forest: return ModelKind::forest;
    case Strategy::mm_svr:
    case Strategy::gm_svr: return ModelKind::svr;
    case Strategy::gm_mlp: return ModelKind::mlp;
    default: return std::nullopt;
    }
}

bool is_global(Strategy s)
{
    return s == Strategy::gm_linear || s == Strategy::gm_tree || s == Strategy::gm_forest || s == Strategy::gm_svr ||
           s == Strategy::gm_mlp;
}

MergedRun centralized_run(const Federation& fed, const QueryTrace& trace, std::size_t cutoff)
{
    MergedRun run;
    run.list = search(fed.full_index, trace.query, cutoff, {}, trace.query_id, kCentralSource);
    for (const auto& e : run.list.entries) {
        run.provenance.push_back({{std::string(kCentralSource)}, {e.score}});
    }
    return run;
}

struct QueryResult {
    QueryTrace trace;
    std::vector<MergedRun> runs;  // [mode][strategy], row-major
};

QueryResult process_query(const Federation& fed, const Topic& topic, const ExperimentConfig& config)
{
    QueryResult r;
    auto& trace = r.trace;
    trace.query_id = topic.topic_id;
    trace.query = build_query(topic, config.query_limits);
    trace.selected = cori_select(trace.query, fed.stats, config.n_select);
    for (const auto& s : trace.selected) {
        trace.source_lists.push_back(search(fed.indexes.at(s.source_id), trace.query, config.k, {}, trace.query_id,
                                            s.source_id));
    }
    trace.central = search(fed.central.index, trace.query, config.central_k, {}, trace.query_id, kCentralSource);

    MergeOptions options;
    options.min_overlap = config.min_overlap;
    options.gm_min_overlap = config.gm_min_overlap;
    options.model = config.model;
    options.seed = config.seed;
    options.parallel = false;

    for (auto mode : config.modes) {
        const auto lists = local_lists(trace, mode, config);
        for (auto strategy : config.strategies) {
            MergedRun run;
            if (strategy == Strategy::centralized) {
                run = centralized_run(fed, trace, config.cutoff);
            } else if (strategy == Strategy::cori) {
                run = cori_merge(lists, trace.selected);
            } else if (strategy == Strategy::ssl) {
                run = ssl_merge(lists, trace.central, trace.selected, options);
            } else if (is_global(strategy)) {
                run = gm_merge(lists, trace.central, trace.selected, *model_of(strategy), options);
            } else {
                run = mm_merge(lists, trace.central, trace.selected, *model_of(strategy), options);
            }
            if (run.list.query_id.empty()) {
                run.list.query_id = trace.query_id;
            }
            r.runs.push_back(finalize(std::move(run), config.cutoff));
        }
    }
    return r;
}

}  // namespace

std::uint64_t corpus_digest(const CollectionSet& corpus)
{
    std::uint64_t h = fnv1a("corpus");
    for (const auto& [id, d] : corpus.corpus()) {
        for (const std::string* f : {&d.doc_id, &d.title, &d.abstract_text, &d.description, &d.claims}) {
            h = fnv1a(*f, h);
            h = fnv1a(std::string_view("\x1f", 1), h);
        }
        for (const auto& c : d.codes) {
            h = fnv1a(c, h);
            h = fnv1a(std::string_view("\x1e", 1), h);
        }
    }
    return h;
}

std::uint64_t qrels_digest(const Qrels& qrels)
{
    std::uint64_t h = fnv1a("qrels");
    for (const auto& [q, docs] : qrels) {
        h = fnv1a(q, h);
        for (const auto& d : docs) {
            h = fnv1a(" " + d, h);
        }
        h = fnv1a("\n", h);
    }
    return h;
}

RunReport run_experiment(const ExperimentInputs& inputs, const ExperimentConfig& config)
{
    if (config.threads > 0) {
        omp_set_num_threads(static_cast<int>(config.threads));
    }
    RunReport report;
    report.config = config_echo(config);
    report.corpus_digest = corpus_digest(inputs.corpus);
    report.qrels_digest = qrels_digest(inputs.qrels);
    report.documents = inputs.corpus.corpus().size();
    report.collections = inputs.corpus.size();
    report.corpus_record_errors = inputs.corpus_record_errors;
    report.topic_record_errors = inputs.topic_record_errors;
    report.cutoff = config.cutoff;

    Stopwatch build_clock;
    const Federation fed = build_federation(inputs.corpus, config);
    report.central_documents = fed.central.index.doc_count();
    report.stage_seconds["federation"] = build_clock.seconds();

    Stopwatch query_clock;
    const auto n = static_cast<std::ptrdiff_t>(inputs.topics.size());
    std::vector<QueryResult> results(inputs.topics.size());
    std::vector<std::exception_ptr> errors(inputs.topics.size());
#pragma omp parallel for schedule(dynamic) if (config.parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            results[i] = process_query(fed, inputs.topics[i], config);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const std::exception& e) {
                throw StageError("query", inputs.topics[i].topic_id + ": " + e.what());
            }
        }
    }
    report.stage_seconds["queries"] = query_clock.seconds();

    Stopwatch eval_clock;
    std::vector<std::string> query_ids;
    for (const auto& t : inputs.topics) {
        query_ids.push_back(t.topic_id);
    }
    std::size_t slot = 0;
    for (auto mode : config.modes) {
        for (auto strategy : config.strategies) {
            StrategyOutcome o{strategy, mode, {}, {}, 0, 0};
            std::map<std::string, RankedList> lists;
            for (auto& r : results) {
                auto& run = r.runs[slot];
                o.fallback_sources += run.fallback_sources;
                o.fallback_queries += run.query_fallback ? 1 : 0;
                lists.emplace(r.trace.query_id, run.list);
                o.runs.emplace(r.trace.query_id, std::move(run));
            }
            o.eval = evaluate(query_ids, lists, inputs.qrels, config.cutoff);
            report.outcomes.push_back(std::move(o));
            ++slot;
        }
    }
    for (auto& r : results) {
        report.traces.push_back(std::move(r.trace));
    }
    std::sort(report.traces.begin(), report.traces.end(),
              [](const QueryTrace& a, const QueryTrace& b) { return a.query_id < b.query_id; });
    report.stage_seconds["evaluation"] = eval_clock.seconds();
    return report;
}

RunReport run_experiment(const ExperimentConfig& config)
{
    auto inputs = load_inputs(config);
    auto report = run_experiment(inputs, config);
    if (!config.out_dir.empty()) {
        stage("report", [&] {
            write_report(report, config.out_dir);
            return 0;
        });
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report files

namespace {

constexpr std::string_view kCsvHeader =
    "strategy,mode,k,n_queries,map,pres,recall,fallback_sources,fallback_queries,corpus_digest,qrels_digest";

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace

std::string render_report_csv(const RunReport& report)
{
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& o : report.outcomes) {
        out += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{},{},{},{}\n", to_string(o.strategy), to_string(o.mode),
                           o.eval.k, o.eval.n_queries(), o.eval.map, o.eval.pres, o.eval.recall, o.fallback_sources,
                           o.fallback_queries, hex(report.corpus_digest), hex(report.qrels_digest));
    }
    return out;
}

std::string render_report_text(const RunReport& report)
{
    std::string out;
    out += "# fedmerge experiment report\n";
    out += fmt::format("# MAP@{0}: mean over queries of AP@{0}, AP denominator = number of relevant documents\n",
                       report.cutoff);
    out += fmt::format(
        "# PRES@{0}: 1 - (mean rank of relevant - (n+1)/2) / {0}; relevant documents missing from the top {0} take "
        "ranks {1}, {2}, ...\n",
        report.cutoff, report.cutoff + 1, report.cutoff + 2);
    out += "\n[config]\n";
    for (const auto& [k, v] : report.config) {
        out += fmt::format("{} = {}\n", k, v);
    }
    out += "\n[corpus]\n";
    out += fmt::format("documents = {}\ncollections = {}\ncentral_sample_documents = {}\n", report.documents,
                       report.collections, report.central_documents);
    out += fmt::format("corpus_record_errors = {}\ntopic_record_errors = {}\n", report.corpus_record_errors,
                       report.topic_record_errors);
    out += fmt::format("corpus_digest = {}\nqrels_digest = {}\n", hex(report.corpus_digest), hex(report.qrels_digest));
    out += "\n[results]\n";
    out += fmt::format("{:<14} {:<12} {:>9} {:>9} {:>9} {:>8} {:>8} {:>9} {:>9}\n", "mode", "strategy", "map", "pres",
                       "recall", "queries", "skipped", "src_fallb", "qry_fallb");
    for (const auto& o : report.outcomes) {
        out += fmt::format("{:<14} {:<12} {:>9.6f} {:>9.6f} {:>9.6f} {:>8} {:>8} {:>9} {:>9}\n", to_string(o.mode),
                           to_string(o.strategy), o.eval.map, o.eval.pres, o.eval.recall, o.eval.n_queries(),
                           o.eval.skipped, o.fallback_sources, o.fallback_queries);
    }
    out += "\n[selection]\n";
    for (const auto& t : report.traces) {
        out += fmt::format("{} ({} sources):", t.query_id, t.selected.size());
        for (const auto& s : t.selected) {
            out += fmt::format(" {}={:.6f}", s.source_id, s.score);
        }
        out += '\n';
    }
    return out;
}

void write_report(const RunReport& report, const std::string& dir)
{
    const fs::path root(dir);
    fs::create_directories(root / "runs");
    for (const auto& o : report.outcomes) {
        std::ostringstream os;
        for (const auto& [q, run] : o.runs) {
            write_run(run.list, os, std::string(to_string(o.strategy)));
        }
        write_file(root / "runs" / fmt::format("{}.{}.run", to_string(o.mode), to_string(o.strategy)), os.str());
    }
    write_file(root / "report.csv", render_report_csv(report));
    write_file(root / "report.txt", render_report_text(report));
    std::string timing;
    for (const auto& [stage_name, secs] : report.stage_seconds) {
        timing += fmt::format("{} {:.3f}s\n", stage_name, secs);
    }
    write_file(root / "timing.txt", timing);
}

// ---------------------------------------------------------------------------
// Comparison

std::vector<ReportRow> parse_report_csv(std::string_view text, const std::string& name)
{
    std::vector<ReportRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (lineno == 1) {
            if (line != kCsvHeader) {
                throw ParseError(name, lineno, "unexpected report header");
            }
            continue;
        }
        auto cells = split_list(line);
        if (cells.size() != 11) {
            throw ParseError(name, lineno, "expected 11 columns");
        }
        ReportRow r;
        try {
            r.strategy = cells[0];
            r.mode = cells[1];
            r.k = to_count("k", cells[2]);
            r.n_queries = to_count("n_queries", cells[3]);
            r.map = to_real("map", cells[4]);
            r.pres = to_real("pres", cells[5]);
            r.recall = to_real("recall", cells[6]);
            r.fallback_sources = to_count("fallback_sources", cells[7]);
            r.fallback_queries = to_count("fallback_queries", cells[8]);
        } catch (const ConfigError& e) {
            throw ParseError(name, lineno, e.what());
        }
        r.corpus_digest = cells[9];
        r.qrels_digest = cells[10];
        rows.push_back(std::move(r));
    }
    if (lineno == 0) {
        throw ParseError(name, 1, "empty report");
    }
    return rows;
}

std::vector<ReportRow> load_report_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_report_csv(ss.str(), path);
}

std::optional<double> ComparisonTable::delta(const std::string& strategy, const std::string& mode, std::size_t metric,
                                             const std::string& baseline) const
{
    auto s = values.find(strategy);
    auto b = values.find(baseline);
    if (s == values.end() || b == values.end()) {
        return std::nullopt;
    }
    auto sm = s->second.find(mode);
    auto bm = b->second.find(mode);
    if (sm == s->second.end() || bm == b->second.end() || bm->second.at(metric) == 0.0) {
        return std::nullopt;
    }
    return (sm->second.at(metric) - bm->second.at(metric)) / bm->second.at(metric);
}

ComparisonTable compare(std::span<const std::vector<ReportRow>> reports)
{
    ComparisonTable table;
    const ReportRow* first = nullptr;
    std::set<std::string> modes, strategies;
    for (const auto& report : reports) {
        for (const auto& r : report) {
            if (!first) {
                first = &r;
                table.k = r.k;
            } else if (r.corpus_digest != first->corpus_digest || r.qrels_digest != first->qrels_digest ||
                       r.k != first->k) {
                throw ValidationError("reports differ in corpus, qrels or cutoff and cannot be compared");
            }
            std::array<double, 3> v{r.map, r.pres, r.recall};
            auto& slot = table.values[r.strategy];
            if (auto it = slot.find(r.mode); it != slot.end() && it->second != v) {
                throw ValidationError("conflicting results for " + r.strategy + "/" + r.mode);
            }
            slot[r.mode] = v;
            modes.insert(r.mode);
            strategies.insert(r.strategy);
        }
    }
    for (auto m : {Mode::cooperative, Mode::uncooperative}) {
        if (modes.erase(std::string(to_string(m)))) {
            table.modes.emplace_back(to_string(m));
        }
    }
    table.modes.insert(table.modes.end(), modes.begin(), modes.end());
    for (auto s : all_strategies()) {
        if (strategies.erase(std::string(to_string(s)))) {
            table.strategies.emplace_back(to_string(s));
        }
    }
    table.strategies.insert(table.strategies.end(), strategies.begin(), strategies.end());
    return table;
}

namespace {

constexpr std::array<std::string_view, 3> kMetricNames = {"MAP", "PRES", "RECALL"};

std::string percent(std::optional<double> d)
{
    return d ? fmt::format("{:+.1f}%", 100.0 * *d) : "n/a";
}

}  // namespace

std::string render_markdown(const ComparisonTable& t)
{
    std::string out = "| strategy |";
    std::string rule = "|---|";
    for (const auto& m : t.modes) {
        for (auto metric : kMetricNames) {
            out += fmt::format(" {} {}@{} |", m, metric, t.k);
            rule += "---:|";
        }
    }
    out += "\n" + rule + "\n";
    for (const auto& s : t.strategies) {
        out += "| " + s + " |";
        const auto& row = t.values.at(s);
        for (const auto& m : t.modes) {
            auto it = row.find(m);
            for (std::size_t i = 0; i < 3; ++i) {
                out += it == row.end() ? " - |" : fmt::format(" {:.4f} |", it->second[i]);
            }
        }
        out += '\n';
    }

    const bool has_cori = t.values.count("cori") != 0;
    const bool has_ssl = t.values.count("ssl") != 0;
    if (has_cori || has_ssl) {
        out += "\nRelative change vs CORI / SSL (same mode)\n\n| strategy |";
        rule = "|---|";
        for (const auto& m : t.modes) {
            for (auto metric : kMetricNames) {
                out += fmt::format(" {} {}@{} |", m, metric, t.k);
                rule += "---:|";
            }
        }
        out += "\n" + rule + "\n";
        for (const auto& s : t.strategies) {
            out += "| " + s + " |";
            for (const auto& m : t.modes) {
                for (std::size_t i = 0; i < 3; ++i) {
                    out += fmt::format(" {} / {} |", percent(t.delta(s, m, i, "cori")), percent(t.delta(s, m, i, "ssl")));
                }
            }
            out += '\n';
        }
    }
    return out;
}

std::string render_csv(const ComparisonTable& t)
{
    std::string out = "strategy,mode,metric,value,delta_vs_cori,delta_vs_ssl\n";
    auto cell = [](std::optional<double> d) { return d ? fmt::format("{:.6f}", *d) : std::string(); };
    for (const auto& s : t.strategies) {
        const auto& row = t.values.at(s);
        for (const auto& m : t.modes) {
            auto it = row.find(m);
            if (it == row.end()) {
                continue;
            }
            for (std::size_t i = 0; i < 3; ++i) {
                out += fmt::format("{},{},{}@{},{:.6f},{},{}\n", s, m, kMetricNames[i], t.k, it->second[i],
                                   cell(t.delta(s, m, i, "cori")), cell(t.delta(s, m, i, "ssl")));
            }
        }
    }
    return out;
}

}  // namespace fedmerge
