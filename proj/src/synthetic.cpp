#include "fedmerge/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fedmerge/common.hpp"

namespace fedmerge {

namespace {

constexpr std::array<std::string_view, 16> kSyllables = {"ka", "lo", "mi", "ne", "ru", "ta", "vi", "so",
                                                          "pe", "da", "gu", "fi", "ze", "ho", "bi", "ly"};

// Word `index` spelled with exactly `syllables` syllables. Different syllable
// counts give different lengths, so the vocabularies never collide.
std::string make_word(std::size_t index, std::size_t syllables)
{
    std::string w;
    for (std::size_t i = 0; i < syllables; ++i) {
        w += kSyllables[index % kSyllables.size()];
        index /= kSyllables.size();
    }
    return w;
}

class TextSource {
  public:
    TextSource(const SyntheticParams& p)
    {
        background_.reserve(p.background_vocab);
        std::vector<double> weights;
        for (std::size_t i = 0; i < p.background_vocab; ++i) {
            background_.push_back(make_word(i, 3));
            weights.push_back(1.0 / static_cast<double>(i + 1));
        }
        zipf_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
    }

    const std::string& background(std::mt19937_64& rng) { return background_[zipf_(rng)]; }

  private:
    std::vector<std::string> background_;
    std::discrete_distribution<std::size_t> zipf_;
};

struct WordMix {
    double topic = 0.0;
    double subject = 0.0;
};

std::string compose(std::size_t length, const WordMix& mix, const std::vector<std::string>& topic_words,
                    const std::vector<std::string>& subject_words, TextSource& text, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string out;
    for (std::size_t i = 0; i < length; ++i) {
        const double r = u(rng);
        const std::string* w;
        if (r < mix.topic && !topic_words.empty()) {
            w = &topic_words[std::uniform_int_distribution<std::size_t>(0, topic_words.size() - 1)(rng)];
        } else if (r < mix.topic + mix.subject && !subject_words.empty()) {
            w = &subject_words[std::uniform_int_distribution<std::size_t>(0, subject_words.size() - 1)(rng)];
        } else {
            w = &text.background(rng);
        }
        if (!out.empty()) {
            out += ' ';
        }
        out += *w;
    }
    return out;
}

std::vector<std::string> make_codes(std::size_t n, std::mt19937_64& rng)
{
    constexpr std::string_view sections = "ABCDEFGH";
    std::set<std::string> seen;
    std::vector<std::string> codes;
    std::uniform_int_distribution<int> cls(1, 99);
    std::uniform_int_distribution<int> sub(0, 25);
    while (codes.size() < n) {
        std::string code = fmt::format("{}{:02d}{}", sections[codes.size() % sections.size()], cls(rng),
                                       static_cast<char>('A' + sub(rng)));
        if (seen.insert(code).second) {
            codes.push_back(code);
        }
    }
    return codes;
}

}  // namespace

SyntheticCollection generate_synthetic(const SyntheticParams& p)
{
    if (p.collections == 0 || p.docs < p.collections || p.topics == 0 || p.min_relevant == 0 ||
        p.max_relevant < p.min_relevant) {
        throw ValidationError("invalid synthetic collection parameters");
    }
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TextSource text(p);

    const auto codes = make_codes(p.collections, rng);
    const std::size_t n_subjects = std::max<std::size_t>(1, p.collections / 2);
    std::vector<std::vector<std::string>> subject_words(n_subjects);
    for (std::size_t s = 0; s < n_subjects; ++s) {
        for (std::size_t i = 0; i < p.subject_vocab; ++i) {
            subject_words[s].push_back(make_word(s * p.subject_vocab + i, 4));
        }
    }
    std::vector<std::size_t> primary(p.collections);
    std::vector<std::size_t> secondary(p.collections);
    for (std::size_t c = 0; c < p.collections; ++c) {
        primary[c] = c % n_subjects;
        secondary[c] = std::uniform_int_distribution<std::size_t>(0, n_subjects - 1)(rng);
    }

    SyntheticCollection out;
    out.docs.resize(p.docs);
    std::vector<std::size_t> home(p.docs);
    std::vector<std::vector<std::size_t>> by_collection(p.collections);
    std::uniform_int_distribution<std::size_t> desc_len(120, 260);
    std::uniform_int_distribution<std::size_t> any_collection(0, p.collections - 1);
    const std::vector<std::string> none;
    for (std::size_t d = 0; d < p.docs; ++d) {
        const std::size_t c = d % p.collections;
        home[d] = c;
        by_collection[c].push_back(d);
        const auto& subj = subject_words[u(rng) < 0.75 ? primary[c] : secondary[c]];
        auto& doc = out.docs[d];
        doc.doc_id = fmt::format("EP{:07d}", d + 1);
        const WordMix mix{0.0, 0.35};
        doc.title = compose(8, mix, none, subj, text, rng);
        doc.abstract_text = compose(40, mix, none, subj, text, rng);
        doc.description = compose(desc_len(rng), mix, none, subj, text, rng);
        doc.claims = compose(50, mix, none, subj, text, rng);
        auto full = [&](std::size_t cc) { return fmt::format("{}{}/{:02d}", codes[cc], 1 + d % 97, d % 89); };
        doc.codes.push_back(full(c));
        if (u(rng) < p.multi_code_rate) {
            const std::size_t extra = any_collection(rng);
            if (extra != c) {
                doc.codes.push_back(full(extra));
                by_collection[extra].push_back(d);
            }
        }
    }

    std::uniform_int_distribution<std::size_t> n_rel(p.min_relevant, p.max_relevant);
    for (std::size_t t = 0; t < p.topics; ++t) {
        Topic topic;
        topic.topic_id = fmt::format("T{:04d}", t + 1);
        const std::size_t h = any_collection(rng);
        const auto& subj = subject_words[primary[h]];
        std::vector<std::string> words;
        for (std::size_t i = 0; i < p.topic_vocab; ++i) {
            words.push_back(make_word(t * p.topic_vocab + i, 5));
        }
        std::vector<std::size_t> related;
        for (std::size_t c = 0; c < p.collections; ++c) {
            if (c != h && primary[c] == primary[h]) {
                related.push_back(c);
            }
        }

        auto pick_doc = [&](double home_share, double related_share) {
            const double r = u(rng);
            std::size_t c;
            if (r < home_share || (related.empty() && r < home_share + related_share)) {
                c = h;
            } else if (r < home_share + related_share) {
                c = related[std::uniform_int_distribution<std::size_t>(0, related.size() - 1)(rng)];
            } else {
                c = any_collection(rng);
            }
            const auto& pool = by_collection[c];
            return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        };
        auto inject = [&](std::size_t d, std::size_t count) {
            std::string& desc = out.docs[d].description;
            for (std::size_t i = 0; i < count; ++i) {
                desc += ' ';
                desc += words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
            }
        };

        std::set<std::size_t> relevant;
        const std::size_t target = std::min(n_rel(rng), p.docs);
        while (relevant.size() < target) {
            relevant.insert(pick_doc(0.5, 0.35));
        }
        auto& qrel = out.qrels[topic.topic_id];
        for (auto d : relevant) {
            inject(d, std::uniform_int_distribution<std::size_t>(4, 14)(rng));
            qrel.insert(out.docs[d].doc_id);
        }
        for (std::size_t i = 0; i < p.hard_negatives; ++i) {
            const auto d = pick_doc(0.6, 0.4);
            if (!relevant.count(d)) {
                inject(d, std::uniform_int_distribution<std::size_t>(1, 3)(rng));
            }
        }

        topic.title = compose(8, WordMix{0.6, 0.4}, words, subj, text, rng);
        topic.abstract_text = compose(40, WordMix{0.4, 0.3}, words, subj, text, rng);
        topic.description = compose(250, WordMix{0.15, 0.25}, words, subj, text, rng);
        topic.claims = compose(50, WordMix{0.3, 0.3}, words, subj, text, rng);
        out.topics.push_back(std::move(topic));
    }
    return out;
}

void write_synthetic(const SyntheticCollection& data, const std::string& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    using json = nlohmann::json;
    {
        std::ofstream out(fs::path(dir) / "corpus.jsonl");
        for (const auto& d : data.docs) {
            json rec = {{"doc_id", d.doc_id},           {"title", d.title},   {"abstract", d.abstract_text},
                        {"description", d.description}, {"claims", d.claims}, {"codes", d.codes}};
            out << rec.dump() << '\n';
        }
        if (!out) {
            throw IoError("failed writing corpus.jsonl in " + dir);
        }
    }
    {
        std::ofstream out(fs::path(dir) / "topics.jsonl");
        for (const auto& t : data.topics) {
            json rec = {{"topic_id", t.topic_id},
                        {"title", t.title},
                        {"abstract", t.abstract_text},
                        {"description", t.description},
                        {"claims", t.claims}};
            out << rec.dump() << '\n';
        }
        if (!out) {
            throw IoError("failed writing topics.jsonl in " + dir);
        }
    }
    {
        std::ofstream out(fs::path(dir) / "qrels.txt");
        for (const auto& [q, docs] : data.qrels) {
            for (const auto& d : docs) {
                out << q << " 0 " << d << " 1\n";
            }
        }
        if (!out) {
            throw IoError("failed writing qrels.txt in " + dir);
        }
    }
}

double ScoreDistortion::apply(double score) const
{
    const double x = std::max(score, 0.0);
    switch (kind) {
    case Kind::identity: return score;
    case Kind::power: return scale * std::pow(x, shape);
    case Kind::log: return scale * std::log1p(x / shape);
    case Kind::saturating: return scale * x / (x + shape);
    }
    return score;
}

ScoreDistortion make_distortion(std::string_view source_id, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, source_id, "distortion"));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScoreDistortion d;
    switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0:
        d.kind = ScoreDistortion::Kind::power;
        d.scale = 0.5 + 4.5 * u(rng);
        d.shape = 0.4 + 2.1 * u(rng);
        break;
    case 1:
        d.kind = ScoreDistortion::Kind::log;
        d.scale = 1.0 + 9.0 * u(rng);
        d.shape = 1.0 + 19.0 * u(rng);
        break;
    default:
        d.kind = ScoreDistortion::Kind::saturating;
        d.scale = 1.0 + 9.0 * u(rng);
        d.shape = 5.0 + 45.0 * u(rng);
        break;
    }
    return d;
}

}  // namespace fedmerge
