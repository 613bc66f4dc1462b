#pragma once
// Per-example prompt training: forward priors, posterior sampling for
// documents and expansions, then propose-and-select updates for the three
// prompts against the weighted log-score surrogate.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "llmqa/core.hpp"
#include "llmqa/pipeline.hpp"

namespace llmqa {

struct TrainConfig {
    int n_doc_posteriors = 2;      // document posterior candidates
    int m_exp_posteriors = 2;      // expansion posterior candidates
    int k_prompt_candidates = 2;   // proposed prompts per kind
    double epsilon_log_floor = 1e-6;
    bool include_incumbent = true;
    std::optional<int> max_examples;

    void validate() const;
};

struct Priors {
    Expansion expansion;               // prior e
    std::vector<Document> retrieved;   // coarse top-n (posterior swap pool)
    std::vector<Document> reranked;    // prior d, length k
    std::string answer;                // prior a
    bool empty_retrieval = false;
};

// Runs the pipeline stages once with the current prompts and no candidate
// selection (m = 1, c = 1).
Priors forward_priors(const Question& q, const PromptSet& prompts, const PipelineConfig& cfg,
                      const Retriever& retriever, const RoleBackends& backends);

struct PosteriorDocCandidate {
    std::vector<Document> docs;  // prior top k-1 plus one swapped-in document
    int swapped_in_rank = -1;    // source position in the retrieved list; -1 = prior itself
    Score s_d;
    Score s_a;
    double v_d = 0.0;  // s_d * s_a
};

struct DocPosteriors {
    std::vector<PosteriorDocCandidate> candidates;
    int best_index = 0;
};

// Candidate i replaces the prior list's last document with the retrieved
// document at position k-1+i (1-based i). The candidate count clamps to the
// available surplus; with no surplus the sole candidate is the prior itself.
DocPosteriors sample_doc_posteriors(const Question& q, const Expansion& prior_e,
                                    const std::vector<Document>& prior_docs,
                                    const std::vector<Document>& retrieved,
                                    const GoldAnswers& gold, const TrainConfig& cfg,
                                    const RoleBackends& backends, long seed = 0);

struct PosteriorExpansionCandidate {
    Expansion expansion;
    Score s_e;
    Score s_d;
    Score s_a;
    double v_e = 0.0;  // s_e * s_d * s_a
};

struct ExpansionPosteriors {
    std::vector<PosteriorExpansionCandidate> candidates;
    int best_index = 0;
};

ExpansionPosteriors sample_expansion_posteriors(const Question& q, const Expansion& prior_e,
                                                const std::vector<Document>& best_docs,
                                                const GoldAnswers& gold, const TrainConfig& cfg,
                                                const PipelineConfig& pipe_cfg,
                                                const RoleBackends& backends, long seed = 0);

enum class PromptKind { answer, rerank, expand };

std::string prompt_kind_name(PromptKind kind);

struct ProposeContext {
    std::string current_prompt;
    std::string question;
    std::string prior_expansion;
    std::string prior_docs;    // rendered
    std::string prior_answer;
    std::string target;        // gold answer / best posterior, per kind
};

// Realizes the prompt-update function as a meta-prompt role call: the
// backend rewrites the current prompt so the prior output moves toward the
// target. Returns K rewrites, plus the incumbent appended as candidate K+1
// when include_incumbent is set. Backend failure returns the incumbent only.
std::vector<std::string> propose_prompts(PromptKind kind, const ProposeContext& context, int K,
                                         bool include_incumbent, Backend& backend,
                                         const GenOptions& options = {});

// The fixed weights and posterior candidates the selection objectives range
// over; computed once per step and reused across all candidate prompts.
struct PosteriorGrid {
    Question q;
    GoldAnswers gold;
    std::vector<Expansion> expansions;          // e-hat_j
    std::vector<double> v_e;                    // aligned with expansions
    std::vector<std::vector<Document>> doc_lists;  // d-hat_i
    std::vector<double> v_d;                    // aligned with doc_lists
};

struct PromptSelection {
    std::string best;
    int best_index = 0;
    std::vector<double> objectives;  // aligned with the candidate list
};

// For each candidate prompt, evaluates the weighted sum of log scores over
// the posterior grid (scores floored at epsilon before log) and returns the
// argmax, ties -> lowest index.
PromptSelection select_prompt(PromptKind kind, const std::vector<std::string>& candidates,
                              const PosteriorGrid& grid, const TrainConfig& cfg,
                              const RoleBackends& backends, long seed = 0);

struct PromptUpdateReport {
    std::vector<std::string> candidates;
    std::vector<double> objectives;
    int selected_index = 0;
    int incumbent_index = -1;  // position of the incumbent, -1 if absent
};

struct StepReport {
    int schema_version = 1;
    std::string question_id;
    bool skipped = false;
    std::string skip_reason;
    std::string prior_expansion;
    std::string prior_answer;
    std::vector<PosteriorDocCandidate> doc_candidates;
    int best_doc_index = 0;
    std::vector<PosteriorExpansionCandidate> expansion_candidates;
    int best_expansion_index = 0;
    PromptUpdateReport answer_update;
    PromptUpdateReport rerank_update;
    PromptUpdateReport expand_update;
    int version_before = 0;
    int version_after = 0;
};

struct StepResult {
    PromptSet prompts;
    StepReport report;
};

StepResult train_step(const Question& q, const GoldAnswers& gold, const PromptSet& prompts,
                      const TrainConfig& cfg, const PipelineConfig& pipe_cfg,
                      const Retriever& retriever, const RoleBackends& backends, long seed = 0);

struct TrainExample {
    Question question;
    GoldAnswers gold;
};

using StepCallback = std::function<void(int step, const PromptSet&, const StepReport&)>;

struct TrainResult {
    PromptSet prompts;
    std::vector<StepReport> log;
};

// Sequential fold of train_step over the dataset, optionally truncated by
// cfg.max_examples; on_step fires after every step (checkpointing hook).
TrainResult train(const std::vector<TrainExample>& dataset, const PromptSet& prompts,
                  const TrainConfig& cfg, const PipelineConfig& pipe_cfg,
                  const Retriever& retriever, const RoleBackends& backends,
                  const StepCallback& on_step = nullptr, long seed = 0);

}  // namespace llmqa
