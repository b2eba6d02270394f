#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedmerge/common.hpp"
#include "fedmerge/corpus.hpp"
#include "fedmerge/engine.hpp"
#include "fedmerge/eval.hpp"
#include "fedmerge/merging.hpp"
#include "fedmerge/mlmodels.hpp"
#include "fedmerge/sampling.hpp"
#include "fedmerge/selection.hpp"

namespace fedmerge {

/// Error from one pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& what) : Error("[" + stage + "] " + what), stage_(std::move(stage))
    {}
    const std::string& stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

enum class Mode { cooperative, uncooperative };

enum class Strategy {
    cori,
    ssl,
    mm_linear,
    mm_poly2,
    mm_poly3,
    mm_tree,
    mm_forest,
    mm_svr,
    gm_linear,
    gm_tree,
    gm_forest,
    gm_svr,
    gm_mlp,
    centralized,
};

std::string_view to_string(Mode mode) noexcept;
std::string_view to_string(Strategy strategy) noexcept;
Mode parse_mode(std::string_view name);
Strategy parse_strategy(std::string_view name);
std::vector<Strategy> all_strategies();

struct ExperimentConfig {
    std::string corpus_path;
    std::string topics_path;
    std::string qrels_path;
    FieldMap fields;

    std::vector<Mode> modes = {Mode::cooperative};
    std::vector<Strategy> strategies = {Strategy::cori};

    std::size_t n_select = 20;
    std::size_t cutoff = 100;
    std::size_t k = 100;           // per-collection result depth
    std::size_t central_k = 1000;  // depth of the central sample index list
    SamplingParams sampling;
    QueryLimits query_limits;
    std::uint64_t seed = 42;

    ModelParams model;
    std::size_t min_overlap = 3;
    std::size_t gm_min_overlap = 5;

    bool full_stats = false;             // selection over full collections
    std::string distortion = "none";     // none | nonlinear
    bool parallel = true;
    std::size_t threads = 0;             // 0: OpenMP default
    std::string cache_dir;
    std::string out_dir;
};

/// Flat `key=value` lines; `#` starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Builds a config from key/value pairs on top of the defaults. Throws
/// ConfigError for unknown keys or bad values.
ExperimentConfig config_from_kv(const std::map<std::string, std::string>& kv);

/// Every effective setting as sorted key/value pairs.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& config);

struct ExperimentInputs {
    CollectionSet corpus;
    std::vector<Topic> topics;
    Qrels qrels;
    std::size_t corpus_record_errors = 0;
    std::size_t topic_record_errors = 0;
};

ExperimentInputs load_inputs(const ExperimentConfig& config);

/// Everything built once per experiment and shared read-only by queries.
struct Federation {
    std::map<std::string, Index> indexes;  // per collection
    Index full_index;                      // all documents (centralized baseline)
    std::vector<SampleSet> samples;
    CentralIndex central;
    CollectionStats stats;
};

/// Builds indexes and samples (from/to cache_dir when set), the central
/// sample index, and the selection statistics.
Federation build_federation(const CollectionSet& corpus, const ExperimentConfig& config);

/// Per-collection indexes, built in an OpenMP loop unless `parallel` is off.
std::map<std::string, Index> build_collection_indexes(const CollectionSet& corpus, bool parallel = true);

/// Per-query broker state shared by all strategies.
struct QueryTrace {
    std::string query_id;
    std::vector<std::string> query;
    std::vector<SourceScore> selected;
    std::vector<RankedList> source_lists;  // engine output, before any score substitution
    RankedList central;
};

/// Local lists as the merger sees them in `mode`: distorted engine scores
/// when cooperating, artificial rank scores otherwise. Empty lists dropped.
std::vector<RankedList> local_lists(const QueryTrace& trace, Mode mode, const ExperimentConfig& config);

struct StrategyOutcome {
    Strategy strategy;
    Mode mode;
    std::map<std::string, MergedRun> runs;  // by query_id, finalized
    EvalResult eval;
    std::size_t fallback_sources = 0;
    std::size_t fallback_queries = 0;
};

struct RunReport {
    std::vector<std::pair<std::string, std::string>> config;
    std::uint64_t corpus_digest = 0;
    std::uint64_t qrels_digest = 0;
    std::size_t documents = 0;
    std::size_t collections = 0;
    std::size_t central_documents = 0;
    std::size_t corpus_record_errors = 0;
    std::size_t topic_record_errors = 0;
    std::size_t cutoff = 100;
    std::vector<QueryTrace> traces;  // sorted by query_id
    std::vector<StrategyOutcome> outcomes;
    std::map<std::string, double> stage_seconds;  // not part of the written report

    const StrategyOutcome& outcome(Strategy s, Mode m) const;
};

std::uint64_t corpus_digest(const CollectionSet& corpus);
std::uint64_t qrels_digest(const Qrels& qrels);

/// Runs the broker pipeline for every topic, mode and strategy.
RunReport run_experiment(const ExperimentInputs& inputs, const ExperimentConfig& config);
/// Loads inputs from the configured paths, runs, and writes outputs to
/// out_dir when set.
RunReport run_experiment(const ExperimentConfig& config);

/// Writes runs/<mode>.<strategy>.run, report.csv, report.txt and
/// timing.txt. Everything except timing.txt is deterministic.
void write_report(const RunReport& report, const std::string& dir);

std::string render_report_csv(const RunReport& report);
std::string render_report_text(const RunReport& report);

/// One row of report.csv.
struct ReportRow {
    std::string strategy;
    std::string mode;
    std::size_t k = 0;
    std::size_t n_queries = 0;
    double map = 0.0;
    double pres = 0.0;
    double recall = 0.0;
    std::size_t fallback_sources = 0;
    std::size_t fallback_queries = 0;
    std::string corpus_digest;
    std::string qrels_digest;
};

std::vector<ReportRow> parse_report_csv(std::string_view text, const std::string& name = "<report>");
std::vector<ReportRow> load_report_csv(const std::string& path);

/// Strategies x (mode, metric) table with relative deltas against CORI and
/// SSL of the same mode, (x - baseline) / baseline.
struct ComparisonTable {
    std::vector<std::string> modes;
    std::vector<std::string> strategies;
    // values[strategy][mode] = {map, pres, recall}
    std::map<std::string, std::map<std::string, std::array<double, 3>>> values;
    std::size_t k = 0;

    std::optional<double> delta(const std::string& strategy, const std::string& mode, std::size_t metric,
                                const std::string& baseline) const;
};

/// Throws ValidationError when the reports disagree on corpus, qrels or
/// cutoff, or give different values for the same strategy and mode.
ComparisonTable compare(std::span<const std::vector<ReportRow>> reports);
std::string render_markdown(const ComparisonTable& table);
std::string render_csv(const ComparisonTable& table);

}  // namespace fedmerge
