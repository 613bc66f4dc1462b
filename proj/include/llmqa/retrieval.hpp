#pragma once
// Coarse top-n retrieval: inverted index with Okapi BM25 scoring, plus an
// import path for externally computed rankings (e.g. dense retriever dumps).

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmqa/core.hpp"

namespace llmqa {

struct RetrievalConfig {
    int n = 100;       // candidate count
    double k1 = 1.2;
    double b = 0.75;
    bool remove_stopwords = false;
    bool stem = false;
    std::optional<std::string> external_scores_path;
};

// lowercase, split on non-alphanumeric, drop empty tokens
std::vector<std::string> tokenize(const std::string& text,
                                  bool remove_stopwords = false,
                                  bool stem = false);

struct Posting {
    std::string doc_id;
    int term_frequency = 0;
};

// Immutable after build; safe for unlimited concurrent retrieve calls.
struct CorpusIndex {
    std::unordered_map<std::string, std::vector<Posting>> postings;
    std::unordered_map<std::string, int> doc_lengths;  // token counts
    std::unordered_map<std::string, Document> doc_store;
    long doc_count = 0;
    double avg_doc_length = 0.0;
    bool remove_stopwords = false;
    bool stem = false;
};

struct CorpusRecord {
    std::string id;
    std::string title;
    std::string text;
};

CorpusIndex build_index(const std::vector<CorpusRecord>& corpus,
                        bool remove_stopwords = false,
                        bool stem = false);

// Documents ordered by BM25 score descending, ties broken by ascending
// doc_id; zero-score documents excluded; at most config.n returned.
std::vector<Document> retrieve(const CorpusIndex& index,
                               const std::string& query_text,
                               const RetrievalConfig& config);

// Okapi BM25 score of a single document for a tokenized query.
double bm25_score(const CorpusIndex& index,
                  const std::vector<std::string>& query_terms,
                  const std::string& doc_id,
                  double k1,
                  double b);

// A retrieval function bound to a question: (question, query_text) -> docs.
// The BM25 path uses query_text; imported rankings use the question id.
using Retriever =
    std::function<std::vector<Document>(const Question&, const std::string& query_text)>;

Retriever make_bm25_retriever(const CorpusIndex& index, const RetrievalConfig& config);

// Loads a JSON-lines file of {"qid", "ranking": [{"doc_id", "score"}]} and
// returns a retriever serving those rankings truncated to config.n.
// Fails at load time if any doc_id is absent from the corpus, and at query
// time if the question id has no imported ranking.
Retriever import_external_scores(const CorpusIndex& index,
                                 const std::string& path,
                                 const RetrievalConfig& config);

}  // namespace llmqa
