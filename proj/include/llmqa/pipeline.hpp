#pragma once
// Forward inference: query expansion -> document selection -> answer
// generation, with evaluator-based candidate selection at each latent step.

#include <memory>
#include <string>
#include <vector>

#include "llmqa/core.hpp"
#include "llmqa/rerank.hpp"
#include "llmqa/retrieval.hpp"
#include "llmqa/roles.hpp"

namespace llmqa {

enum class InsertionLocation { first, last, random };

InsertionLocation insertion_location_from_name(const std::string& name);
std::string insertion_location_name(InsertionLocation loc);

struct PipelineConfig {
    int m_expansions = 10;
    int n_retrieve = 100;
    WindowConfig window{20, 10};
    int rerank_candidates = 1;  // c
    InsertionLocation insertion_location = InsertionLocation::first;
    long random_seed = 0;
    double temperature = 0.7;

    void validate() const;
};

// One backend per role; entries may alias the same backend object.
struct RoleBackends {
    std::shared_ptr<Backend> expand;
    std::shared_ptr<Backend> rank;
    std::shared_ptr<Backend> answer;
    std::shared_ptr<Backend> score_expansion;
    std::shared_ptr<Backend> score_reranking;
    std::shared_ptr<Backend> score_answer;
    std::shared_ptr<Backend> propose;  // prompt-rewrite calls (training only)

    // Binds every role to one backend.
    static RoleBackends all(std::shared_ptr<Backend> backend);
    void validate() const;
};

struct ExpansionChoice {
    Expansion best;
    int best_index = 0;
    std::vector<std::pair<Expansion, Score>> all;
};

// Generates m candidates, scores each, returns argmax (ties -> lowest index).
ExpansionChoice expand_query(const Question& q, const PromptSet& prompts,
                             const PipelineConfig& cfg, const RoleBackends& backends);

struct DocumentSelection {
    std::vector<Document> retrieved;
    std::vector<Document> docs;  // final top-k
    std::vector<std::pair<std::vector<Document>, Score>> rerank_candidates;
    int windows_invoked = 0;
    int windows_fallback = 0;
    bool empty_retrieval_warning = false;
};

// Retrieval query = question text + " " + expansion text; coarse retrieve,
// then rerank_with_candidates. Zero retrieved documents degrades to
// closed-book (empty docs, warning flag) rather than failing.
DocumentSelection select_documents(const Question& q, const Expansion& e,
                                   const PromptSet& prompts, const PipelineConfig& cfg,
                                   const Retriever& retriever, const RoleBackends& backends);

// The expansion is treated as an auxiliary document and inserted first
// (default), last, or at a seeded-random position.
std::vector<std::string> assemble_evidence(const Expansion& e,
                                           const std::vector<Document>& docs,
                                           InsertionLocation location, long seed = 0);

// Thrown when a stage fails mid-run; carries the stages completed so far.
class StageError : public Error {
public:
    StageError(const std::string& what, Trace partial)
        : Error(what), partial_trace(std::move(partial)) {}
    Trace partial_trace;
};

Trace run_pipeline(const Question& q, const PromptSet& prompts, const PipelineConfig& cfg,
                   const Retriever& retriever, const RoleBackends& backends);

}  // namespace llmqa
