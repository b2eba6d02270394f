#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fedmerge/corpus.hpp"
#include "fedmerge/engine.hpp"

namespace fedmerge::testing {

/// Directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("fedmerge-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

    std::string write(const std::string& name, const std::string& content) const
    {
        std::ofstream(path_ / name, std::ios::binary) << content;
        return file(name);
    }

  private:
    std::filesystem::path path_;
};

/// Ranked list from (doc_id, score) pairs, ranked by the usual order.
inline RankedList make_list(std::string source, std::vector<std::pair<std::string, double>> docs,
                            std::string query = "q")
{
    RankedList l{std::move(query), std::move(source), {}};
    for (auto& [id, s] : docs) {
        l.entries.push_back({id, s, 0});
    }
    sort_and_rank(l.entries);
    return l;
}

inline Document make_doc(std::string id, std::string text, std::vector<std::string> codes)
{
    Document d;
    d.doc_id = std::move(id);
    d.title = std::move(text);
    d.codes = std::move(codes);
    return d;
}

/// Random lowercase word drawn from a small alphabet so words repeat.
inline std::string random_word(std::mt19937_64& rng, std::size_t vocab = 40)
{
    std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
    std::size_t i = pick(rng);
    std::string w = "w";
    do {
        w += static_cast<char>('a' + i % 26);
        i /= 26;
    } while (i);
    return w;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t vocab = 40)
{
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        out += (i ? " " : "") + random_word(rng, vocab);
    }
    return out;
}

/// Random documents spread over `codes` collections; some carry two codes.
inline std::vector<Document> random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t codes,
                                           std::size_t vocab = 40)
{
    std::vector<Document> out;
    std::uniform_int_distribution<std::size_t> len(3, 30);
    std::uniform_int_distribution<std::size_t> code(0, codes - 1);
    std::bernoulli_distribution multi(0.15);
    for (std::size_t d = 0; d < docs; ++d) {
        std::vector<std::string> cs = {"C" + std::to_string(100 + code(rng))};
        if (multi(rng)) {
            auto extra = "C" + std::to_string(100 + code(rng));
            if (extra != cs[0]) {
                cs.push_back(extra);
            }
        }
        out.push_back(make_doc("D" + std::to_string(1000 + d), random_text(rng, len(rng), vocab), cs));
    }
    return out;
}

}  // namespace fedmerge::testing
