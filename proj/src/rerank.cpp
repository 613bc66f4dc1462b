#include "llmqa/rerank.hpp"

#include <algorithm>

namespace llmqa {

WindowConfig::WindowConfig(int w_, int l_) : w(w_), l(l_) {
    if (w < 2) throw Error("WindowConfig: w must be >= 2");
    if (l < 1) throw Error("WindowConfig: l must be >= 1");
    if (l >= w) throw Error("WindowConfig: l must be < w");
}

WindowRanker make_backend_window_ranker(Backend& backend, double temperature) {
    return [&backend, temperature](const Question& q, const Expansion& e,
                                   const std::vector<Document>& window,
                                   const std::string& theta_d, long seed) {
        GenOptions options;
        options.temperature = temperature;
        options.seed = seed;
        return rank_window(q, e, window, theta_d, backend, options);
    };
}

RerankResult sliding_window_rerank(const std::vector<Document>& docs, const Question& q,
                                   const Expansion& e, const std::string& theta_d,
                                   const WindowConfig& cfg, const WindowRanker& ranker,
                                   long seed) {
    if (docs.empty()) throw Error("no candidates to rerank");
    const int n = static_cast<int>(docs.size());

    std::vector<Document> working = docs;
    RerankResult result;

    auto apply_window = [&](int start, int size) {
        std::vector<Document> window(working.begin() + start, working.begin() + start + size);
        WindowRanking ranking =
            ranker(q, e, window, theta_d, seed + result.windows_invoked);
        ++result.windows_invoked;
        if (ranking.fallback) ++result.windows_fallback;
        std::copy(ranking.docs.begin(), ranking.docs.end(), working.begin() + start);
    };

    if (n <= cfg.w) {
        apply_window(0, n);
    } else {
        int start = n - cfg.w;
        while (true) {
            apply_window(start, cfg.w);
            if (start == 0) break;
            start = std::max(0, start - cfg.l);
        }
    }

    int keep = std::min(cfg.k(), n);
    working.resize(static_cast<size_t>(keep));
    for (int i = 0; i < keep; ++i) working[static_cast<size_t>(i)].rank = i;
    result.docs = std::move(working);
    return result;
}

RerankCandidates rerank_with_candidates(const std::vector<Document>& docs, const Question& q,
                                        const Expansion& e, const std::string& theta_d,
                                        const WindowConfig& cfg, const WindowRanker& ranker,
                                        const RerankEvaluator& evaluator, int c, long seed) {
    if (c < 1) throw Error("rerank_with_candidates requires c >= 1");

    RerankCandidates out;
    double best_score = -1.0;
    for (int i = 0; i < c; ++i) {
        RerankResult attempt =
            sliding_window_rerank(docs, q, e, theta_d, cfg, ranker, seed + 1000L * i);
        out.windows_invoked += attempt.windows_invoked;
        out.windows_fallback += attempt.windows_fallback;
        Score score = evaluator(attempt.docs);
        if (score.value() > best_score) {
            best_score = score.value();
            out.best_index = i;
            out.best = attempt.docs;
        }
        out.candidates.emplace_back(std::move(attempt.docs), score);
    }
    return out;
}

}  // namespace llmqa
