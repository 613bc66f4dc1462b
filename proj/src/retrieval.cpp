#include "llmqa/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <unordered_set>

#include <json.hpp>

namespace llmqa {

namespace {

const std::unordered_set<std::string>& stopword_set() {
    static const std::unordered_set<std::string> words = {
        "a",   "an",  "and", "are", "as",  "at",   "be",  "by",   "for", "from",
        "has", "he",  "in",  "is",  "it",  "its",  "of",  "on",   "or",  "that",
        "the", "to",  "was", "were", "will", "with", "this", "but", "not", "she"};
    return words;
}

// Light suffix stripping; not a full Porter stemmer.
std::string stem_token(std::string t) {
    auto ends_with = [&](const char* suf) {
        size_t n = std::char_traits<char>::length(suf);
        return t.size() > n + 2 && t.compare(t.size() - n, n, suf) == 0;
    };
    if (ends_with("ing")) t.resize(t.size() - 3);
    else if (ends_with("ies")) { t.resize(t.size() - 3); t += 'y'; }
    else if (ends_with("ed")) t.resize(t.size() - 2);
    else if (t.size() > 3 && t.back() == 's' && t[t.size() - 2] != 's') t.pop_back();
    return t;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text, bool remove_stopwords, bool stem) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    if (remove_stopwords) {
        std::erase_if(tokens, [](const std::string& t) { return stopword_set().count(t) > 0; });
    }
    if (stem) {
        for (auto& t : tokens) t = stem_token(t);
    }
    return tokens;
}

CorpusIndex build_index(const std::vector<CorpusRecord>& corpus,
                        bool remove_stopwords,
                        bool stem) {
    if (corpus.empty()) throw Error("cannot build index from an empty corpus");
    CorpusIndex index;
    index.remove_stopwords = remove_stopwords;
    index.stem = stem;
    long total_tokens = 0;
    for (const auto& rec : corpus) {
        if (index.doc_store.count(rec.id))
            throw Error("duplicate doc_id in corpus: " + rec.id);
        if (trim(rec.text).empty())
            throw Error("document has empty text: " + rec.id);
        auto tokens = tokenize(rec.text, remove_stopwords, stem);
        std::map<std::string, int> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf)
            index.postings[term].push_back({rec.id, count});
        index.doc_lengths[rec.id] = static_cast<int>(tokens.size());
        total_tokens += static_cast<long>(tokens.size());
        index.doc_store[rec.id] = Document{rec.id, rec.title, rec.text, 0.0, 0};
    }
    index.doc_count = static_cast<long>(corpus.size());
    index.avg_doc_length = static_cast<double>(total_tokens) / index.doc_count;
    // Canonical posting order so build is insensitive to corpus stream order.
    for (auto& [term, list] : index.postings)
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    return index;
}

double bm25_score(const CorpusIndex& index,
                  const std::vector<std::string>& query_terms,
                  const std::string& doc_id,
                  double k1,
                  double b) {
    auto len_it = index.doc_lengths.find(doc_id);
    if (len_it == index.doc_lengths.end()) return 0.0;
    double dl = len_it->second;
    double score = 0.0;
    std::set<std::string> seen;
    for (const auto& term : query_terms) {
        if (!seen.insert(term).second) continue;
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        const auto& list = it->second;
        double df = static_cast<double>(list.size());
        int tf = 0;
        for (const auto& p : list)
            if (p.doc_id == doc_id) { tf = p.term_frequency; break; }
        if (tf == 0) continue;
        double idf = std::log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5));
        double norm = tf + k1 * (1.0 - b + b * dl / index.avg_doc_length);
        score += idf * tf * (k1 + 1.0) / norm;
    }
    return score;
}

std::vector<Document> retrieve(const CorpusIndex& index,
                               const std::string& query_text,
                               const RetrievalConfig& config) {
    if (config.n < 1) throw Error("RetrievalConfig.n must be >= 1");
    auto terms = tokenize(query_text, index.remove_stopwords, index.stem);
    if (terms.empty()) throw Error("empty query after tokenization");

    // Gather candidate doc_ids from postings of the query terms.
    std::set<std::string> candidates;
    std::set<std::string> seen_terms;
    for (const auto& term : terms) {
        if (!seen_terms.insert(term).second) continue;
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        for (const auto& p : it->second) candidates.insert(p.doc_id);
    }

    std::vector<Document> results;
    for (const auto& id : candidates) {
        double s = bm25_score(index, terms, id, config.k1, config.b);
        if (s <= 0.0) continue;
        Document d = index.doc_store.at(id);
        d.retrieval_score = s;
        results.push_back(std::move(d));
    }
    std::sort(results.begin(), results.end(), [](const Document& a, const Document& b) {
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.doc_id < b.doc_id;
    });
    if (static_cast<int>(results.size()) > config.n) results.resize(config.n);
    for (size_t i = 0; i < results.size(); ++i) results[i].rank = static_cast<int>(i);
    return results;
}

Retriever make_bm25_retriever(const CorpusIndex& index, const RetrievalConfig& config) {
    return [&index, config](const Question&, const std::string& query_text) {
        return retrieve(index, query_text, config);
    };
}

Retriever import_external_scores(const CorpusIndex& index,
                                 const std::string& path,
                                 const RetrievalConfig& config) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open external scores file: " + path);

    auto rankings = std::make_shared<std::unordered_map<std::string, std::vector<Document>>>();
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("external scores parse error at line " + std::to_string(line_no) +
                        ": " + e.what());
        }
        std::string qid = obj.at("qid").get<std::string>();
        std::vector<Document> docs;
        for (const auto& entry : obj.at("ranking")) {
            std::string doc_id = entry.at("doc_id").get<std::string>();
            auto it = index.doc_store.find(doc_id);
            if (it == index.doc_store.end())
                throw Error("external scores reference unknown doc_id: " + doc_id);
            Document d = it->second;
            d.retrieval_score = entry.at("score").get<double>();
            d.rank = static_cast<int>(docs.size());
            docs.push_back(std::move(d));
        }
        (*rankings)[qid] = std::move(docs);
    }

    int n = config.n;
    return [rankings, n](const Question& q, const std::string&) {
        auto it = rankings->find(q.id);
        if (it == rankings->end())
            throw Error("no imported ranking for question id: " + q.id);
        std::vector<Document> docs = it->second;
        if (static_cast<int>(docs.size()) > n) docs.resize(n);
        return docs;
    };
}

}  // namespace llmqa
