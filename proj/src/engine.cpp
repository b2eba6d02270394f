#include "fedmerge/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>
#include <zlib.h>

#include "fedmerge/common.hpp"
#include "fedmerge/text.hpp"

namespace fedmerge {

std::optional<TermId> Index::term_id(std::string_view term) const
{
    auto it = std::lower_bound(terms_.begin(), terms_.end(), term,
                               [](const std::string& a, std::string_view b) { return a < b; });
    if (it == terms_.end() || *it != term) {
        return std::nullopt;
    }
    return static_cast<TermId>(it - terms_.begin());
}

std::span<const Posting> Index::postings(TermId term) const
{
    auto begin = postings_offsets_.at(term);
    auto end = postings_offsets_.at(term + 1);
    return {postings_.data() + begin, static_cast<std::size_t>(end - begin)};
}

std::uint32_t Index::df(std::string_view term) const
{
    auto id = term_id(term);
    return id ? static_cast<std::uint32_t>(postings(*id).size()) : 0;
}

std::optional<DocNum> Index::doc_num(std::string_view doc_id) const
{
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc_id,
                               [](const std::string& a, std::string_view b) { return a < b; });
    if (it == doc_ids_.end() || *it != doc_id) {
        return std::nullopt;
    }
    return static_cast<DocNum>(it - doc_ids_.begin());
}

std::span<const TermId> Index::doc_terms(DocNum doc) const
{
    auto begin = forward_offsets_.at(doc);
    auto end = forward_offsets_.at(doc + 1);
    return {forward_.data() + begin, static_cast<std::size_t>(end - begin)};
}

void Index::finish()
{
    total_tokens_ = 0;
    for (auto len : doc_lengths_) {
        total_tokens_ += len;
    }
    avg_doc_length_ = doc_lengths_.empty() ? 0.0 : static_cast<double>(total_tokens_) / doc_lengths_.size();
}

Index build_index_from_tokens(std::vector<TokenizedDoc> docs)
{
    if (docs.empty()) {
        throw ValidationError("cannot build an index over zero documents");
    }
    std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    for (std::size_t i = 1; i < docs.size(); ++i) {
        if (docs[i].doc_id == docs[i - 1].doc_id) {
            throw ValidationError("duplicate doc_id " + docs[i].doc_id);
        }
    }

    Index index;
    std::unordered_map<std::string_view, TermId> ids;
    {
        std::vector<std::string_view> all;
        for (const auto& d : docs) {
            all.insert(all.end(), d.tokens.begin(), d.tokens.end());
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        index.terms_.assign(all.begin(), all.end());
    }
    ids.reserve(index.terms_.size());
    for (std::size_t t = 0; t < index.terms_.size(); ++t) {
        ids.emplace(index.terms_[t], static_cast<TermId>(t));
    }

    // Per-document (term, tf) runs, in doc order.
    std::vector<std::vector<std::pair<TermId, std::uint32_t>>> doc_counts(docs.size());
    std::vector<std::uint64_t> df(index.terms_.size(), 0);
    index.doc_ids_.reserve(docs.size());
    index.doc_lengths_.reserve(docs.size());
    index.forward_offsets_.push_back(0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
        std::vector<TermId> tids;
        tids.reserve(docs[d].tokens.size());
        for (const auto& tok : docs[d].tokens) {
            tids.push_back(ids.at(tok));
        }
        std::sort(tids.begin(), tids.end());
        auto& counts = doc_counts[d];
        for (std::size_t i = 0; i < tids.size();) {
            std::size_t j = i;
            while (j < tids.size() && tids[j] == tids[i]) {
                ++j;
            }
            counts.emplace_back(tids[i], static_cast<std::uint32_t>(j - i));
            ++df[tids[i]];
            index.forward_.push_back(tids[i]);
            i = j;
        }
        index.forward_offsets_.push_back(index.forward_.size());
        index.doc_ids_.push_back(std::move(docs[d].doc_id));
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(docs[d].tokens.size()));
    }

    index.postings_offsets_.assign(index.terms_.size() + 1, 0);
    for (std::size_t t = 0; t < df.size(); ++t) {
        index.postings_offsets_[t + 1] = index.postings_offsets_[t] + df[t];
    }
    index.postings_.resize(index.postings_offsets_.back());
    std::vector<std::uint64_t> cursor(index.postings_offsets_.begin(), index.postings_offsets_.end() - 1);
    for (std::size_t d = 0; d < doc_counts.size(); ++d) {
        for (auto [t, tf] : doc_counts[d]) {
            index.postings_[cursor[t]++] = Posting{static_cast<DocNum>(d), tf};
        }
    }
    index.finish();
    return index;
}

Index build_index(std::span<const Document> docs)
{
    std::vector<TokenizedDoc> tokenized;
    tokenized.reserve(docs.size());
    for (const auto& d : docs) {
        tokenized.push_back({d.doc_id, tokenize(d.full_text())});
    }
    return build_index_from_tokens(std::move(tokenized));
}

Index build_collection_index(const CollectionSet& set, std::span<const std::string> doc_ids)
{
    std::vector<TokenizedDoc> tokenized;
    tokenized.reserve(doc_ids.size());
    for (const auto& id : doc_ids) {
        tokenized.push_back({id, tokenize(set.document(id).full_text())});
    }
    return build_index_from_tokens(std::move(tokenized));
}

void sort_and_rank(std::vector<RankedEntry>& entries)
{
    std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        entries[i].rank = static_cast<std::uint32_t>(i + 1);
    }
}

double bm25_term_weight(std::uint32_t tf, std::uint32_t df, std::size_t doc_count, double doc_length,
                        double avg_doc_length, const Bm25Params& params)
{
    const double n = static_cast<double>(doc_count);
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double norm = avg_doc_length > 0.0 ? doc_length / avg_doc_length : 1.0;
    const double f = static_cast<double>(tf);
    return idf * f * (params.k1 + 1.0) / (f + params.k1 * (1.0 - params.b + params.b * norm));
}

RankedList search(const Index& index, std::span<const std::string> query, std::size_t k, const Bm25Params& params,
                  std::string_view query_id, std::string_view source_id)
{
    if (k == 0) {
        throw ValidationError("search depth k must be at least 1");
    }
    RankedList out{std::string(query_id), std::string(source_id), {}};
    if (query.empty()) {
        spdlog::debug("empty query {} against {}", query_id, source_id);
        return out;
    }

    std::map<std::string_view, std::uint32_t> qtf;
    for (const auto& t : query) {
        ++qtf[t];
    }

    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<DocNum> touched;
    for (const auto& [term, count] : qtf) {
        auto id = index.term_id(term);
        if (!id) {
            continue;
        }
        auto plist = index.postings(*id);
        const auto df = static_cast<std::uint32_t>(plist.size());
        for (const auto& p : plist) {
            if (acc[p.doc] == 0.0) {
                touched.push_back(p.doc);
            }
            acc[p.doc] += count * bm25_term_weight(p.tf, df, index.doc_count(), index.doc_length(p.doc),
                                                   index.avg_doc_length(), params);
        }
    }

    // DocNum order is doc_id order, so comparing DocNum breaks ties by doc_id.
    auto better = [&](DocNum a, DocNum b) { return acc[a] != acc[b] ? acc[a] > acc[b] : a < b; };
    const auto take = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);
    out.entries.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.entries.push_back({index.doc_id(touched[i]), acc[touched[i]], static_cast<std::uint32_t>(i + 1)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

constexpr char kIndexMagic[4] = {'F', 'M', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

class Writer {
  public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s)
    {
        u64(s.size());
        raw(s.data(), s.size());
    }
    template <typename T>
    void vec(const std::vector<T>& v)
    {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(T));
    }
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    const std::string& bytes() const { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    explicit Reader(std::string_view bytes) : buf_(bytes) {}
    std::uint32_t u32()
    {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str()
    {
        auto n = u64();
        need(n);
        std::string s(buf_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    template <typename T>
    std::vector<T> vec()
    {
        auto n = u64();
        if (n > (buf_.size() - pos_) / sizeof(T)) {
            throw IoError("index file truncated");
        }
        std::vector<T> v(n);
        raw(v.data(), n * sizeof(T));
        return v;
    }
    void raw(void* p, std::size_t n)
    {
        need(n);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == buf_.size(); }

  private:
    void need(std::size_t n) const
    {
        if (n > buf_.size() - pos_) {
            throw IoError("index file truncated");
        }
    }
    std::string_view buf_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes)
{
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

void write_index(const Index& index, std::ostream& out)
{
    Writer w;
    w.raw(kIndexMagic, sizeof kIndexMagic);
    w.u32(kIndexVersion);
    w.u64(index.terms_.size());
    for (const auto& t : index.terms_) {
        w.str(t);
    }
    w.vec(index.postings_offsets_);
    w.vec(index.postings_);
    w.u64(index.doc_ids_.size());
    for (const auto& d : index.doc_ids_) {
        w.str(d);
    }
    w.vec(index.doc_lengths_);
    w.vec(index.forward_offsets_);
    w.vec(index.forward_);
    const auto& bytes = w.bytes();
    const std::uint32_t crc = crc_of(bytes);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!out) {
        throw IoError("failed to write index");
    }
}

Index read_index(std::istream& in)
{
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof kIndexMagic + 8) {
        throw IoError("index file truncated");
    }
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof stored, sizeof stored);
    std::string_view payload(bytes.data(), bytes.size() - sizeof stored);
    if (crc_of(payload) != stored) {
        throw IoError("index checksum mismatch");
    }
    Reader r(payload);
    char magic[4];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kIndexMagic, sizeof magic) != 0) {
        throw IoError("not an index file");
    }
    if (auto v = r.u32(); v != kIndexVersion) {
        throw IoError("unsupported index version " + std::to_string(v));
    }
    Index index;
    auto nterms = r.u64();
    index.terms_.reserve(nterms);
    for (std::uint64_t i = 0; i < nterms; ++i) {
        index.terms_.push_back(r.str());
    }
    index.postings_offsets_ = r.vec<std::uint64_t>();
    index.postings_ = r.vec<Posting>();
    auto ndocs = r.u64();
    for (std::uint64_t i = 0; i < ndocs; ++i) {
        index.doc_ids_.push_back(r.str());
    }
    index.doc_lengths_ = r.vec<std::uint32_t>();
    index.forward_offsets_ = r.vec<std::uint64_t>();
    index.forward_ = r.vec<TermId>();
    if (!r.done() || index.postings_offsets_.size() != nterms + 1 || index.doc_lengths_.size() != ndocs ||
        index.forward_offsets_.size() != ndocs + 1) {
        throw IoError("index file is inconsistent");
    }
    index.finish();
    return index;
}

void save_index(const Index& index, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    write_index(index, out);
}

Index load_index(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_index(in);
}

}  // namespace fedmerge
