#pragma once
// Core domain types shared by every module. All types are immutable value
// objects after construction and safe to share across threads.

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace llmqa {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

std::string trim(const std::string& s);

struct Question {
    std::string id;
    std::string text;

    Question() = default;
    Question(std::string id_, std::string text_);
};

struct GoldAnswers {
    std::vector<std::string> answers;

    GoldAnswers() = default;
    explicit GoldAnswers(std::vector<std::string> answers_);
};

struct Document {
    std::string doc_id;
    std::string title;  // may be empty
    std::string text;
    double retrieval_score = 0.0;
    int rank = 0;  // 0-based position in its current list
};

struct Expansion {
    std::string text;
    int source_prompt_version = 0;

    Expansion() = default;
    Expansion(std::string text_, int version);

    bool operator==(const Expansion& o) const {
        return text == o.text && source_prompt_version == o.source_prompt_version;
    }
};

// Evaluator score, clamped into [0,1] at construction. Out-of-range values
// from backends are clamped rather than rejected; non-finite values become 0.
class Score {
public:
    Score() = default;
    explicit Score(double v);
    double value() const { return value_; }

private:
    double value_ = 0.0;
};

// The three learnable prompts. Updated only through with_prompts(), which
// bumps the version; there is no in-place mutation path.
struct PromptSet {
    std::string theta_e;
    std::string theta_d;
    std::string theta_a;
    int version = 0;

    PromptSet() = default;
    PromptSet(std::string e, std::string d, std::string a, int version_ = 0);

    PromptSet with_prompts(std::string e, std::string d, std::string a) const;
};

// Full record of one pipeline run.
struct Trace {
    std::string question_id;
    std::vector<std::pair<Expansion, Score>> expansion_candidates;
    Expansion chosen_expansion;
    std::vector<Document> retrieved;
    std::vector<Document> reranked;
    std::vector<std::pair<std::vector<Document>, Score>> rerank_candidates;
    std::string answer;
    int prompt_version = 0;
    std::map<std::string, double> timing_ms;  // stage name -> duration
    int windows_total = 0;
    int windows_fallback = 0;
    bool empty_retrieval_warning = false;
};

// True iff all Trace invariants hold: reranked doc_ids are a subset of
// retrieved, ranks are unique within each list, the chosen expansion is one
// of the candidates, and the answer is non-empty.
bool validate_trace(const Trace& trace);

}  // namespace llmqa
