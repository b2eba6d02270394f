#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedmerge/engine.hpp"

namespace fedmerge {

/// query_id -> relevant doc_ids.
using Qrels = std::map<std::string, std::set<std::string>>;

/// AP@k with |rel| as the denominator. Returns 0 when `rel` is empty.
double average_precision(const RankedList& run, const std::set<std::string>& rel, std::size_t k = 100);

/// |top-k ∩ rel| / |rel|.
double recall_at(const RankedList& run, const std::set<std::string>& rel, std::size_t k = 100);

/// Patent Retrieval Evaluation Score with N_max = n_max:
///   PRES = 1 - (mean(r_i) - (n + 1) / 2) / N_max,
/// where relevant documents missing from the top N_max take ranks N_max+1,
/// N_max+2, ... in turn. Clamped to [0, 1].
double pres_at(const RankedList& run, const std::set<std::string>& rel, std::size_t n_max = 100);

struct QueryEval {
    std::string query_id;
    double map = 0.0;
    double pres = 0.0;
    double recall = 0.0;
};

struct EvalResult {
    std::size_t k = 100;
    std::vector<QueryEval> per_query;  // sorted by query_id
    double map = 0.0;
    double pres = 0.0;
    double recall = 0.0;
    std::size_t skipped = 0;  // queries without relevant documents

    std::size_t n_queries() const noexcept { return per_query.size(); }
};

/// Evaluates `query_ids` (runs missing for a query score zero). Queries with
/// no relevant documents are skipped and counted.
EvalResult evaluate(std::span<const std::string> query_ids, const std::map<std::string, RankedList>& runs,
                    const Qrels& qrels, std::size_t k = 100);

/// 4-column `query_id iter doc_id relevance`; relevance > 0 is relevant.
Qrels read_qrels(std::istream& in, const std::string& name = "<qrels>");
Qrels load_qrels(const std::string& path);

/// 6-column `query_id Q0 doc_id rank score tag`, with shortest round-trip
/// score formatting.
void write_run(const RankedList& run, std::ostream& out, const std::string& tag);
void write_run(const RankedList& run, const std::string& path, const std::string& tag);

/// Groups lines by query_id; entries keep file order, source_id is the tag.
std::map<std::string, RankedList> read_run(std::istream& in, const std::string& name = "<run>");
std::map<std::string, RankedList> load_run(const std::string& path);

}  // namespace fedmerge
