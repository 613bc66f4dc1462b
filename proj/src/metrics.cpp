#include "llmqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <sstream>
#include <unordered_map>

namespace llmqa {

std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::ispunct(c)) continue;
        lowered += static_cast<char>(std::tolower(c));
    }
    std::istringstream words(lowered);
    std::string word, out;
    while (words >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

int exact_match(const std::string& pred, const GoldAnswers& gold) {
    std::string p = normalize_answer(pred);
    for (const auto& answer : gold.answers)
        if (p == normalize_answer(answer)) return 1;
    return 0;
}

int answer_hit(const std::vector<Document>& docs, const GoldAnswers& gold) {
    if (docs.empty()) return 0;
    std::string blob;
    for (const auto& d : docs) {
        blob += d.text;
        blob += ' ';
    }
    std::string normalized = normalize_answer(blob);
    for (const auto& answer : gold.answers) {
        std::string needle = normalize_answer(answer);
        if (!needle.empty() && normalized.find(needle) != std::string::npos) return 1;
    }
    return 0;
}

EvalReport evaluate(const std::vector<Trace>& traces, const std::vector<DatasetEntry>& dataset,
                    const std::vector<int>& ks, int bootstrap_rounds, long seed,
                    bool include_expansion) {
    std::unordered_map<std::string, const DatasetEntry*> by_id;
    for (const auto& entry : dataset) by_id[entry.question.id] = &entry;

    EvalReport report;
    long windows = 0, fallbacks = 0;
    for (const auto& trace : traces) {
        auto it = by_id.find(trace.question_id);
        if (it == by_id.end())
            throw Error("trace references unknown question id: " + trace.question_id);
        const GoldAnswers& gold = it->second->gold;

        PerExample ex;
        ex.question_id = trace.question_id;
        ex.em_bit = exact_match(trace.answer, gold);
        for (int k : ks) {
            std::vector<Document> prefix(
                trace.reranked.begin(),
                trace.reranked.begin() +
                    std::min<size_t>(trace.reranked.size(), static_cast<size_t>(k)));
            if (include_expansion && !trace.chosen_expansion.text.empty())
                prefix.push_back(Document{"__expansion__", "", trace.chosen_expansion.text, 0, 0});
            ex.hit_bits[k] = answer_hit(prefix, gold);
        }
        report.per_example.push_back(std::move(ex));
        windows += trace.windows_total;
        fallbacks += trace.windows_fallback;
    }

    const size_t n = report.per_example.size();
    if (n == 0) throw Error("evaluate requires at least one trace");

    double em_sum = 0.0;
    for (const auto& ex : report.per_example) em_sum += ex.em_bit;
    report.em = em_sum / static_cast<double>(n);

    for (int k : ks) {
        double hits = 0.0;
        for (const auto& ex : report.per_example) hits += ex.hit_bits.at(k);
        report.recall_at[k] = hits / static_cast<double>(n);
    }

    report.em_bootstrap_rounds = bootstrap_rounds;
    if (bootstrap_rounds > 0) {
        std::mt19937_64 rng(static_cast<uint64_t>(seed));
        std::uniform_int_distribution<size_t> pick(0, n - 1);
        double total = 0.0;
        for (int round = 0; round < bootstrap_rounds; ++round) {
            double round_sum = 0.0;
            for (size_t i = 0; i < n; ++i)
                round_sum += report.per_example[pick(rng)].em_bit;
            total += round_sum / static_cast<double>(n);
        }
        report.em_bootstrap_mean = total / bootstrap_rounds;
    } else {
        report.em_bootstrap_mean = report.em;
    }

    report.fallback_rate =
        windows > 0 ? static_cast<double>(fallbacks) / static_cast<double>(windows) : 0.0;
    return report;
}

std::string render_report(const EvalReport& report, const std::vector<int>& ks) {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof(line), "%-22s %8.4f\n", "EM", report.em);
    out << line;
    std::snprintf(line, sizeof(line), "%-22s %8.4f  (%d rounds)\n", "EM (bootstrap mean)",
                  report.em_bootstrap_mean, report.em_bootstrap_rounds);
    out << line;
    for (int k : ks) {
        std::string label = "Recall@" + std::to_string(k);
        std::snprintf(line, sizeof(line), "%-22s %8.4f\n", label.c_str(),
                      report.recall_at.at(k));
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-22s %8.4f\n", "Window fallback rate",
                  report.fallback_rate);
    out << line;
    return out.str();
}

}  // namespace llmqa
