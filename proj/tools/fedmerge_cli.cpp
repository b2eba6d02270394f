#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "fedmerge/runner.hpp"
#include "fedmerge/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fedmerge;

namespace {

// Flags shared by the experiment subcommands. Unset flags leave the config
// file value (or the built-in default) in place.
struct CommonFlags {
    std::string config;
    std::optional<std::string> corpus, topics, qrels, strategy, mode, out;
    std::optional<std::size_t> select, cutoff, k;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;  // extra key=value overrides
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "key=value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--corpus", f.corpus, "corpus JSONL");
    cmd->add_option("--topics", f.topics, "topics JSONL");
    cmd->add_option("--qrels", f.qrels, "relevance judgements (query 0 doc rel)");
    cmd->add_option("--strategy", f.strategy, "comma list of merge strategies, or 'all'");
    cmd->add_option("--mode", f.mode, "cooperative, uncooperative or both");
    cmd->add_option("--select", f.select, "collections selected per query");
    cmd->add_option("--cutoff", f.cutoff, "merged list length and evaluation depth");
    cmd->add_option("--k", f.k, "results requested from each selected collection");
    cmd->add_option("--seed", f.seed, "master random seed");
    cmd->add_option("--out", f.out, "output location");
    cmd->add_option("--set", f.sets, "extra configuration key=value (repeatable)");
}

std::map<std::string, std::string> merged_kv(const CommonFlags& f)
{
    std::map<std::string, std::string> kv;
    if (!f.config.empty()) {
        kv = read_config_file(f.config);
    }
    for (const auto& s : f.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("--set expects key=value, got '" + s + "'");
        }
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    auto put = [&](const char* key, const auto& v) {
        if (v) {
            kv[key] = fmt::format("{}", *v);
        }
    };
    put("corpus", f.corpus);
    put("topics", f.topics);
    put("qrels", f.qrels);
    put("strategy", f.strategy);
    put("mode", f.mode);
    put("select", f.select);
    put("cutoff", f.cutoff);
    put("k", f.k);
    put("seed", f.seed);
    put("out", f.out);
    return kv;
}

ExperimentConfig make_config(const CommonFlags& f)
{
    try {
        return config_from_kv(merged_kv(f));
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("config", e.what());
    }
}

CollectionSet load_corpus_only(const ExperimentConfig& c)
{
    if (c.corpus_path.empty()) {
        throw StageError("config", "--corpus is required");
    }
    try {
        auto loaded = load_corpus(c.corpus_path, c.fields);
        for (const auto& e : loaded.errors) {
            spdlog::warn("{}:{}: {}", c.corpus_path, e.line, e.message);
        }
        return std::move(loaded.collections);
    } catch (const std::exception& e) {
        throw StageError("load", e.what());
    }
}

int cmd_index(const CommonFlags& f)
{
    auto config = make_config(f);
    if (config.out_dir.empty()) {
        throw StageError("config", "--out <dir> is required");
    }
    auto corpus = load_corpus_only(config);
    try {
        auto indexes = build_collection_indexes(corpus, config.parallel);
        fs::create_directories(config.out_dir);
        std::ofstream manifest(fs::path(config.out_dir) / "collections.tsv");
        for (const auto& [code, index] : indexes) {
            save_index(index, (fs::path(config.out_dir) / (code + ".idx")).string());
            manifest << code << '\t' << index.doc_count() << '\t' << index.vocabulary().size() << '\n';
        }
        std::cout << fmt::format("indexed {} documents into {} collections under {}\n", corpus.corpus().size(),
                                 indexes.size(), config.out_dir);
    } catch (const std::exception& e) {
        throw StageError("index", e.what());
    }
    return 0;
}

int cmd_sample(const CommonFlags& f)
{
    auto config = make_config(f);
    if (config.out_dir.empty()) {
        throw StageError("config", "--out <file> is required");
    }
    auto corpus = load_corpus_only(config);
    try {
        auto indexes = build_collection_indexes(corpus, config.parallel);
        auto samples = sample_collections(indexes, config.sampling, config.seed, config.parallel);
        if (auto parent = fs::path(config.out_dir).parent_path(); !parent.empty()) {
            fs::create_directories(parent);
        }
        save_samples(samples, config.out_dir);
        std::size_t total = 0;
        for (const auto& s : samples) {
            total += s.doc_ids.size();
        }
        std::cout << fmt::format("sampled {} documents from {} collections into {}\n", total, samples.size(),
                                 config.out_dir);
    } catch (const std::exception& e) {
        throw StageError("sample", e.what());
    }
    return 0;
}

int cmd_run(const CommonFlags& f)
{
    auto config = make_config(f);
    auto report = run_experiment(config);
    std::cout << render_report_csv(report);
    return 0;
}

int cmd_compare(const std::vector<std::string>& reports, const std::optional<std::string>& out)
{
    ComparisonTable table;
    try {
        std::vector<std::vector<ReportRow>> rows;
        for (const auto& r : reports) {
            rows.push_back(load_report_csv(r));
        }
        table = compare(rows);
    } catch (const std::exception& e) {
        throw StageError("compare", e.what());
    }
    const auto md = render_markdown(table);
    if (out) {
        try {
            fs::create_directories(*out);
            std::ofstream(fs::path(*out) / "comparison.md") << md;
            std::ofstream(fs::path(*out) / "comparison.csv") << render_csv(table);
        } catch (const std::exception& e) {
            throw StageError("report", e.what());
        }
    }
    std::cout << md;
    return 0;
}

int cmd_synth(const SyntheticParams& p, const std::string& out)
{
    try {
        write_synthetic(generate_synthetic(p), out);
    } catch (const std::exception& e) {
        throw StageError("synth", e.what());
    }
    std::cout << fmt::format("wrote {} documents, {} topics to {}\n", p.docs, p.topics, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"fedmerge: result merging experiments for federated search"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "log progress to stderr");

    CommonFlags index_flags, sample_flags, run_flags;
    auto* index_cmd = app.add_subcommand("index", "build per-collection indexes");
    add_common(index_cmd, index_flags);
    auto* sample_cmd = app.add_subcommand("sample", "query-based sampling of every collection");
    add_common(sample_cmd, sample_flags);
    auto* run_cmd = app.add_subcommand("run", "run the broker pipeline and evaluate");
    add_common(run_cmd, run_flags);

    std::vector<std::string> reports;
    std::optional<std::string> compare_out;
    auto* compare_cmd = app.add_subcommand("compare", "tabulate report.csv files");
    compare_cmd->add_option("reports", reports, "report.csv files")->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--out", compare_out, "directory for comparison.md and comparison.csv");

    SyntheticParams synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic test collection");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--collections", synth.collections, "number of collections");
    synth_cmd->add_option("--docs", synth.docs, "number of documents");
    synth_cmd->add_option("--topics", synth.topics, "number of topics");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_logger_mt("fedmerge"));
    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

    try {
        if (*index_cmd) {
            return cmd_index(index_flags);
        }
        if (*sample_cmd) {
            return cmd_sample(sample_flags);
        }
        if (*run_cmd) {
            return cmd_run(run_flags);
        }
        if (*compare_cmd) {
            return cmd_compare(reports, compare_out);
        }
        return cmd_synth(synth, synth_out);
    } catch (const StageError& e) {
        std::cerr << "fedmerge: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fedmerge: [internal] " << e.what() << '\n';
        return 3;
    }
}
