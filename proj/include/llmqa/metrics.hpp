#pragma once
// Answer-accuracy and evidence-quality metrics: exact match, answer recall
// over document prefixes, and bootstrap EM aggregation.

#include <map>
#include <string>
#include <vector>

#include "llmqa/core.hpp"

namespace llmqa {

// lowercase, strip punctuation, drop the articles a/an/the, collapse spaces.
std::string normalize_answer(const std::string& text);

// 1 iff the normalized prediction equals any normalized gold answer.
int exact_match(const std::string& pred, const GoldAnswers& gold);

// 1 iff any normalized gold answer occurs as a substring of the normalized
// concatenation of the document texts.
int answer_hit(const std::vector<Document>& docs, const GoldAnswers& gold);

struct PerExample {
    std::string question_id;
    int em_bit = 0;
    std::map<int, int> hit_bits;  // k -> hit
};

struct EvalReport {
    double em = 0.0;
    double em_bootstrap_mean = 0.0;
    int em_bootstrap_rounds = 0;
    std::map<int, double> recall_at;
    std::vector<PerExample> per_example;
    double fallback_rate = 0.0;  // share of windows that hit ranking-parse fallback
};

struct DatasetEntry {
    Question question;
    GoldAnswers gold;
};

// recall_at[k] averages answer_hit over each trace's first k reranked
// documents; the bootstrap mean resamples examples with replacement
// (seeded, size = dataset size) bootstrap_rounds times. When
// include_expansion is set, the chosen expansion text counts as evidence.
EvalReport evaluate(const std::vector<Trace>& traces,
                    const std::vector<DatasetEntry>& dataset,
                    const std::vector<int>& ks,
                    int bootstrap_rounds = 10,
                    long seed = 0,
                    bool include_expansion = false);

// Aligned plain-text rendering of a report.
std::string render_report(const EvalReport& report, const std::vector<int>& ks);

}  // namespace llmqa
