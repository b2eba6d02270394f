#include "fedmerge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fedmerge/common.hpp"
#include "fedmerge/text.hpp"

namespace fedmerge {

namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s)
{
    const auto* ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::string text_field(const json& rec, const std::string& key)
{
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        throw ValidationError("field '" + key + "' is not a string");
    }
    return it->get<std::string>();
}

std::vector<std::string> code_field(const json& rec, const std::string& key)
{
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) {
        throw ValidationError("missing '" + key + "'");
    }
    std::vector<std::string> raw;
    if (it->is_array()) {
        for (const auto& c : *it) {
            if (!c.is_string()) {
                throw ValidationError("'" + key + "' contains a non-string entry");
            }
            raw.push_back(c.get<std::string>());
        }
    } else if (it->is_string()) {
        std::string s = it->get<std::string>();
        std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == ';'; }, ' ');
        for (auto w : split_words(s)) {
            raw.emplace_back(w);
        }
    } else {
        throw ValidationError("'" + key + "' must be a string or an array of strings");
    }
    std::set<std::string> codes;
    for (const auto& r : raw) {
        codes.insert(partition_code(r));
    }
    if (codes.empty()) {
        throw ValidationError("empty '" + key + "'");
    }
    return {codes.begin(), codes.end()};
}

template <typename OnRecord>
std::size_t for_each_record(const std::string& path, std::vector<RecordError>& errors, OnRecord&& on_record)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::string line;
    std::size_t lineno = 0;
    std::size_t records = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        ++records;
        try {
            json rec = json::parse(line);
            if (!rec.is_object()) {
                throw ValidationError("record is not a JSON object");
            }
            on_record(rec);
        } catch (const json::exception& e) {
            errors.push_back({lineno, std::string("invalid JSON: ") + e.what()});
        } catch (const ValidationError& e) {
            errors.push_back({lineno, e.what()});
        }
    }
    if (in.bad()) {
        throw IoError("read failure on " + path);
    }
    return records;
}

}  // namespace

std::string Document::full_text() const
{
    std::string out;
    out.reserve(title.size() + abstract_text.size() + description.size() + claims.size() + 3);
    out += title;
    out += ' ';
    out += abstract_text;
    out += ' ';
    out += description;
    out += ' ';
    out += claims;
    return out;
}

CollectionSet CollectionSet::from_documents(std::vector<Document> docs)
{
    CollectionSet set;
    for (auto& doc : docs) {
        if (doc.doc_id.empty()) {
            throw ValidationError("document without doc_id");
        }
        if (doc.codes.empty()) {
            throw ValidationError("document " + doc.doc_id + " has no codes");
        }
        std::set<std::string> codes;
        for (const auto& c : doc.codes) {
            codes.insert(partition_code(c));
        }
        doc.codes.assign(codes.begin(), codes.end());
        for (const auto& c : doc.codes) {
            set.collections_[c].push_back(doc.doc_id);
        }
        std::string id = doc.doc_id;
        if (!set.corpus_.emplace(id, std::move(doc)).second) {
            throw ValidationError("duplicate doc_id " + id);
        }
    }
    for (auto& [code, members] : set.collections_) {
        std::sort(members.begin(), members.end());
    }
    return set;
}

const std::vector<std::string>& CollectionSet::members(const std::string& code) const
{
    auto it = collections_.find(code);
    if (it == collections_.end()) {
        throw ValidationError("unknown collection " + code);
    }
    return it->second;
}

const Document& CollectionSet::document(const std::string& doc_id) const
{
    auto it = corpus_.find(doc_id);
    if (it == corpus_.end()) {
        throw ValidationError("unknown document " + doc_id);
    }
    return it->second;
}

std::vector<std::string> CollectionSet::codes() const
{
    std::vector<std::string> out;
    out.reserve(collections_.size());
    for (const auto& [code, members] : collections_) {
        out.push_back(code);
    }
    return out;
}

CorpusLoad load_corpus(const std::string& path, const FieldMap& fields)
{
    CorpusLoad load;
    std::vector<Document> docs;
    std::set<std::string> seen;
    load.records = for_each_record(path, load.errors, [&](const json& rec) {
        Document doc;
        doc.doc_id = std::string(trim(text_field(rec, fields.doc_id)));
        if (doc.doc_id.empty()) {
            throw ValidationError("missing '" + fields.doc_id + "'");
        }
        doc.codes = code_field(rec, fields.codes);
        doc.title = text_field(rec, fields.title);
        doc.abstract_text = text_field(rec, fields.abstract_text);
        doc.description = text_field(rec, fields.description);
        doc.claims = text_field(rec, fields.claims);
        if (!seen.insert(doc.doc_id).second) {
            throw ValidationError("duplicate doc_id " + doc.doc_id);
        }
        docs.push_back(std::move(doc));
    });
    load.collections = CollectionSet::from_documents(std::move(docs));
    return load;
}

TopicLoad load_topics(const std::string& path, const FieldMap& fields)
{
    TopicLoad load;
    std::set<std::string> seen;
    load.records = for_each_record(path, load.errors, [&](const json& rec) {
        Topic t;
        t.topic_id = std::string(trim(text_field(rec, fields.topic_id)));
        if (t.topic_id.empty()) {
            throw ValidationError("missing '" + fields.topic_id + "'");
        }
        t.title = text_field(rec, fields.title);
        t.abstract_text = text_field(rec, fields.abstract_text);
        t.description = text_field(rec, fields.description);
        t.claims = text_field(rec, fields.claims);
        if (!seen.insert(t.topic_id).second) {
            throw ValidationError("duplicate topic_id " + t.topic_id);
        }
        load.topics.push_back(std::move(t));
    });
    return load;
}

std::string partition_code(std::string_view raw_code)
{
    auto code = trim(raw_code);
    if (code.empty()) {
        throw ValidationError("empty classification code");
    }
    return std::string(code.substr(0, std::min<std::size_t>(4, code.size())));
}

std::vector<std::string> build_query(const Topic& topic, const QueryLimits& limits)
{
    std::vector<std::string> tokens;
    tokenize_into(topic.title, tokens);
    tokenize_into(topic.abstract_text, tokens);
    auto desc_words = split_words(topic.description);
    if (desc_words.size() > limits.desc_word_limit) {
        desc_words.resize(limits.desc_word_limit);
    }
    for (auto w : desc_words) {
        tokenize_into(w, tokens);
    }
    tokenize_into(topic.claims, tokens);
    if (tokens.empty()) {
        throw ValidationError("topic " + topic.topic_id + " yields an empty query");
    }
    if (tokens.size() > limits.total_word_limit) {
        tokens.resize(limits.total_word_limit);
    }
    return tokens;
}

}  // namespace fedmerge
