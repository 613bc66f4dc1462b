#include "llmqa/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace llmqa {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

Question::Question(std::string id_, std::string text_)
    : id(std::move(id_)), text(std::move(text_)) {
    if (trim(text).empty()) throw Error("Question text must be non-empty");
}

GoldAnswers::GoldAnswers(std::vector<std::string> answers_) : answers(std::move(answers_)) {
    if (answers.empty()) throw Error("GoldAnswers requires at least one answer");
    for (const auto& a : answers)
        if (a.empty()) throw Error("GoldAnswers entries must be non-empty");
}

Expansion::Expansion(std::string text_, int version)
    : text(std::move(text_)), source_prompt_version(version) {
    if (text.empty()) throw Error("Expansion text must be non-empty");
}

Score::Score(double v) {
    if (!std::isfinite(v)) v = 0.0;
    value_ = std::clamp(v, 0.0, 1.0);
}

PromptSet::PromptSet(std::string e, std::string d, std::string a, int version_)
    : theta_e(std::move(e)), theta_d(std::move(d)), theta_a(std::move(a)), version(version_) {
    if (theta_e.empty() || theta_d.empty() || theta_a.empty())
        throw Error("PromptSet prompts must be non-empty");
    if (version < 0) throw Error("PromptSet version must be >= 0");
}

PromptSet PromptSet::with_prompts(std::string e, std::string d, std::string a) const {
    return PromptSet(std::move(e), std::move(d), std::move(a), version + 1);
}

namespace {

bool ranks_unique(const std::vector<Document>& docs) {
    std::set<int> seen;
    for (const auto& d : docs)
        if (!seen.insert(d.rank).second) return false;
    return true;
}

}  // namespace

bool validate_trace(const Trace& trace) {
    if (trace.question_id.empty()) return false;
    if (trace.answer.empty()) return false;
    if (!ranks_unique(trace.retrieved) || !ranks_unique(trace.reranked)) return false;

    std::set<std::string> retrieved_ids;
    for (const auto& d : trace.retrieved) retrieved_ids.insert(d.doc_id);
    for (const auto& d : trace.reranked)
        if (!retrieved_ids.count(d.doc_id)) return false;

    bool chosen_found = false;
    for (const auto& [cand, score] : trace.expansion_candidates)
        if (cand == trace.chosen_expansion) chosen_found = true;
    if (!chosen_found) return false;

    return true;
}

}  // namespace llmqa
