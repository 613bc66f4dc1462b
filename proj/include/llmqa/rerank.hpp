#pragma once
// Fine-grained document selection: sliding-window listwise reranking of n
// candidates down to the top k = w - l.

#include <functional>
#include <vector>

#include "llmqa/core.hpp"
#include "llmqa/roles.hpp"

namespace llmqa {

struct WindowConfig {
    int w = 20;  // window size
    int l = 10;  // step

    WindowConfig() = default;
    WindowConfig(int w_, int l_);
    int k() const { return w - l; }
};

// A window ranker reorders one window of documents, best first. seed lets
// stochastic rankers vary across rerank candidates while staying replayable.
using WindowRanker = std::function<WindowRanking(
    const Question& q, const Expansion& e, const std::vector<Document>& window,
    const std::string& theta_d, long seed)>;

// Adapts a role backend into a WindowRanker (wire-format parse + fallback).
WindowRanker make_backend_window_ranker(Backend& backend, double temperature = 0.7);

struct RerankResult {
    std::vector<Document> docs;  // length min(k, n), ranks 0..k-1
    int windows_invoked = 0;
    int windows_fallback = 0;
};

// Slides a window of size w from the back of the retrieval-ordered list to
// the front in steps of l, reordering each window in place; the first
// min(k, n) documents after the window anchored at position 0 are returned.
// The final window start clamps to 0 and may overlap its predecessor by more
// than w - l.
RerankResult sliding_window_rerank(const std::vector<Document>& docs, const Question& q,
                                   const Expansion& e, const std::string& theta_d,
                                   const WindowConfig& cfg, const WindowRanker& ranker,
                                   long seed = 0);

// Scores one candidate top-k list; returns the evaluator score.
using RerankEvaluator = std::function<Score(const std::vector<Document>& candidate_docs)>;

struct RerankCandidates {
    std::vector<Document> best;
    std::vector<std::pair<std::vector<Document>, Score>> candidates;
    int best_index = 0;
    int windows_invoked = 0;
    int windows_fallback = 0;
};

// Runs sliding_window_rerank c times (seed varied per attempt), scores each
// resulting list, and returns the argmax-scored list (ties -> lowest index).
RerankCandidates rerank_with_candidates(const std::vector<Document>& docs, const Question& q,
                                        const Expansion& e, const std::string& theta_d,
                                        const WindowConfig& cfg, const WindowRanker& ranker,
                                        const RerankEvaluator& evaluator, int c, long seed = 0);

}  // namespace llmqa
