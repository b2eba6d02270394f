#include "fedmerge/sampling.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "fedmerge/common.hpp"
#include "fedmerge/text.hpp"

namespace fedmerge {

namespace {

// Pool of candidate query terms supporting uniform draw-without-replacement.
class TermPool {
  public:
    void add(TermId t)
    {
        if (seen_.insert(t).second) {
            pool_.push_back(t);
        }
    }
    bool empty() const { return pool_.empty(); }
    TermId draw(std::mt19937_64& rng)
    {
        std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
        auto i = pick(rng);
        TermId t = pool_[i];
        pool_[i] = pool_.back();
        pool_.pop_back();
        return t;
    }

  private:
    std::vector<TermId> pool_;
    std::set<TermId> seen_;
};

}  // namespace

SampleSet query_based_sample(const Index& index, std::string source_id, const SamplingParams& params,
                             std::uint64_t seed)
{
    if (index.doc_count() == 0 || index.vocabulary().empty()) {
        throw ValidationError("cannot sample an empty index (" + source_id + ")");
    }
    if (params.target_size == 0 || params.docs_per_query == 0) {
        throw ValidationError("sampling target and batch size must be positive");
    }

    SampleSet out{std::move(source_id), {}, 0};
    std::mt19937_64 rng(seed);
    const auto vocab_size = static_cast<TermId>(index.vocabulary().size());
    std::vector<bool> issued(vocab_size, false);
    std::vector<bool> sampled(index.doc_count(), false);
    std::size_t issued_count = 0;
    TermPool learned;

    auto next_term = [&]() -> std::optional<TermId> {
        while (!learned.empty()) {
            auto t = learned.draw(rng);
            if (!issued[t]) {
                return t;
            }
        }
        // Learned vocabulary exhausted (or nothing sampled yet): fall back to
        // a uniform draw over the unissued part of the full vocabulary.
        if (issued_count == vocab_size) {
            return std::nullopt;
        }
        std::uniform_int_distribution<std::size_t> pick(0, vocab_size - issued_count - 1);
        auto nth = pick(rng);
        for (TermId t = 0; t < vocab_size; ++t) {
            if (!issued[t] && nth-- == 0) {
                return t;
            }
        }
        return std::nullopt;
    };

    const auto target = std::min(params.target_size, index.doc_count());
    while (out.doc_ids.size() < target) {
        auto term = next_term();
        if (!term) {
            break;
        }
        issued[*term] = true;
        ++issued_count;
        ++out.queries_issued;

        const std::string& text = index.vocabulary()[*term];
        auto hits = search(index, std::span<const std::string>(&text, 1), index.doc_count());
        std::size_t taken = 0;
        for (const auto& e : hits.entries) {
            if (taken == params.docs_per_query || out.doc_ids.size() == target) {
                break;
            }
            auto d = *index.doc_num(e.doc_id);
            if (sampled[d]) {
                continue;
            }
            sampled[d] = true;
            out.doc_ids.push_back(e.doc_id);
            ++taken;
            for (TermId t : index.doc_terms(d)) {
                if (!issued[t]) {
                    learned.add(t);
                }
            }
        }
    }
    return out;
}

std::vector<SampleSet> sample_collections(const std::map<std::string, Index>& indexes, const SamplingParams& params,
                                          std::uint64_t master_seed, bool parallel)
{
    std::vector<const std::string*> ids;
    std::vector<const Index*> idx;
    for (const auto& [id, index] : indexes) {
        ids.push_back(&id);
        idx.push_back(&index);
    }
    std::vector<SampleSet> out(ids.size());
    const auto n = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[i] = query_based_sample(*idx[i], *ids[i], params, derive_seed(master_seed, *ids[i]));
    }
    return out;
}

CentralIndex build_central_index(std::span<const SampleSet> samples, const CollectionSet& corpus)
{
    if (samples.empty()) {
        throw ValidationError("no sample sets to build a central index from");
    }
    CentralIndex central;
    for (const auto& s : samples) {
        const auto& members = corpus.members(s.source_id);
        for (const auto& id : s.doc_ids) {
            if (!corpus.contains(id)) {
                throw ValidationError("sampled document " + id + " is not in the corpus");
            }
            if (!std::binary_search(members.begin(), members.end(), id)) {
                throw ValidationError("sampled document " + id + " is not a member of " + s.source_id);
            }
            central.sources_of[id].push_back(s.source_id);
        }
    }
    std::vector<TokenizedDoc> docs;
    docs.reserve(central.sources_of.size());
    for (auto& [id, sources] : central.sources_of) {
        std::sort(sources.begin(), sources.end());
        sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
        docs.push_back({id, tokenize(corpus.document(id).full_text())});
    }
    if (docs.empty()) {
        throw ValidationError("sample sets contain no documents");
    }
    central.index = build_index_from_tokens(std::move(docs));
    return central;
}

void save_samples(std::span<const SampleSet> samples, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    for (const auto& s : samples) {
        out << s.source_id << ' ' << s.queries_issued;
        for (const auto& d : s.doc_ids) {
            out << ' ' << d;
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

std::vector<SampleSet> load_samples(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::vector<SampleSet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto words = split_words(line);
        if (words.empty()) {
            continue;
        }
        if (words.size() < 2) {
            throw ParseError(path, lineno, "expected `source_id queries_issued doc_id...`");
        }
        SampleSet s;
        s.source_id = std::string(words[0]);
        try {
            s.queries_issued = std::stoull(std::string(words[1]));
        } catch (const std::exception&) {
            throw ParseError(path, lineno, "bad query count");
        }
        for (std::size_t i = 2; i < words.size(); ++i) {
            s.doc_ids.emplace_back(words[i]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace fedmerge
