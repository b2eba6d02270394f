#include "fedmerge/eval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "fedmerge/common.hpp"
#include "fedmerge/text.hpp"

namespace fedmerge {

double average_precision(const RankedList& run, const std::set<std::string>& rel, std::size_t k)
{
    if (rel.empty()) {
        return 0.0;
    }
    const std::size_t depth = std::min(k, run.size());
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (rel.count(run.entries[i].doc_id)) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(rel.size());
}

double recall_at(const RankedList& run, const std::set<std::string>& rel, std::size_t k)
{
    if (rel.empty()) {
        return 0.0;
    }
    const std::size_t depth = std::min(k, run.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        hits += rel.count(run.entries[i].doc_id);
    }
    return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double pres_at(const RankedList& run, const std::set<std::string>& rel, std::size_t n_max)
{
    if (rel.empty() || n_max == 0) {
        return 0.0;
    }
    const std::size_t depth = std::min(n_max, run.size());
    const double n = static_cast<double>(rel.size());
    double rank_sum = 0.0;
    std::size_t found = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (rel.count(run.entries[i].doc_id)) {
            rank_sum += static_cast<double>(i + 1);
            ++found;
        }
    }
    for (std::size_t j = 1; j <= rel.size() - found; ++j) {
        rank_sum += static_cast<double>(n_max + j);
    }
    const double pres = 1.0 - (rank_sum / n - (n + 1.0) / 2.0) / static_cast<double>(n_max);
    return std::clamp(pres, 0.0, 1.0);
}

EvalResult evaluate(std::span<const std::string> query_ids, const std::map<std::string, RankedList>& runs,
                    const Qrels& qrels, std::size_t k)
{
    EvalResult result;
    result.k = k;
    std::vector<std::string> ids(query_ids.begin(), query_ids.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const RankedList empty;
    for (const auto& q : ids) {
        auto rel = qrels.find(q);
        if (rel == qrels.end() || rel->second.empty()) {
            ++result.skipped;
            continue;
        }
        auto run = runs.find(q);
        const RankedList& r = run == runs.end() ? empty : run->second;
        result.per_query.push_back(
            {q, average_precision(r, rel->second, k), pres_at(r, rel->second, k), recall_at(r, rel->second, k)});
    }
    if (!result.per_query.empty()) {
        for (const auto& e : result.per_query) {
            result.map += e.map;
            result.pres += e.pres;
            result.recall += e.recall;
        }
        const auto n = static_cast<double>(result.per_query.size());
        result.map /= n;
        result.pres /= n;
        result.recall /= n;
    }
    return result;
}

namespace {

template <typename T>
bool parse_number(std::string_view s, T& out)
{
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

Qrels read_qrels(std::istream& in, const std::string& name)
{
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto w = split_words(line);
        if (w.empty()) {
            continue;
        }
        if (w.size() != 4) {
            throw ParseError(name, lineno, "expected `query_id iter doc_id relevance`");
        }
        long relevance = 0;
        if (!parse_number(w[3], relevance)) {
            throw ParseError(name, lineno, "relevance is not an integer");
        }
        auto& set = qrels[std::string(w[0])];
        if (relevance > 0) {
            set.emplace(w[2]);
        }
    }
    return qrels;
}

Qrels load_qrels(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_qrels(in, path);
}

void write_run(const RankedList& run, std::ostream& out, const std::string& tag)
{
    for (const auto& e : run.entries) {
        out << fmt::format("{} Q0 {} {} {} {}\n", run.query_id, e.doc_id, e.rank, e.score, tag);
    }
}

void write_run(const RankedList& run, const std::string& path, const std::string& tag)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    write_run(run, out, tag);
}

std::map<std::string, RankedList> read_run(std::istream& in, const std::string& name)
{
    std::map<std::string, RankedList> runs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto w = split_words(line);
        if (w.empty()) {
            continue;
        }
        if (w.size() != 6) {
            throw ParseError(name, lineno, "expected `query_id Q0 doc_id rank score tag`");
        }
        RankedEntry e;
        e.doc_id = std::string(w[2]);
        if (!parse_number(w[3], e.rank) || !parse_number(w[4], e.score)) {
            throw ParseError(name, lineno, "bad rank or score");
        }
        auto& list = runs[std::string(w[0])];
        list.query_id = std::string(w[0]);
        list.source_id = std::string(w[5]);
        list.entries.push_back(std::move(e));
    }
    return runs;
}

std::map<std::string, RankedList> load_run(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_run(in, path);
}

}  // namespace fedmerge
