#include "llmqa/pipeline.hpp"

#include <chrono>
#include <random>

namespace llmqa {

namespace {

class StageTimer {
public:
    explicit StageTimer(Trace& trace) : trace_(trace) {}
    void record(const std::string& stage) {
        auto now = std::chrono::steady_clock::now();
        trace_.timing_ms[stage] =
            std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
    }

private:
    Trace& trace_;
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

InsertionLocation insertion_location_from_name(const std::string& name) {
    if (name == "first") return InsertionLocation::first;
    if (name == "last") return InsertionLocation::last;
    if (name == "random") return InsertionLocation::random;
    throw Error("unknown insertion location: " + name);
}

std::string insertion_location_name(InsertionLocation loc) {
    switch (loc) {
        case InsertionLocation::first: return "first";
        case InsertionLocation::last: return "last";
        case InsertionLocation::random: return "random";
    }
    return "first";
}

void PipelineConfig::validate() const {
    if (m_expansions < 1) throw Error("PipelineConfig: m_expansions must be >= 1");
    if (n_retrieve < 1) throw Error("PipelineConfig: n_retrieve must be >= 1");
    if (rerank_candidates < 1) throw Error("PipelineConfig: rerank_candidates must be >= 1");
    WindowConfig check(window.w, window.l);  // revalidates w/l
    (void)check;
}

RoleBackends RoleBackends::all(std::shared_ptr<Backend> backend) {
    RoleBackends b;
    b.expand = backend;
    b.rank = backend;
    b.answer = backend;
    b.score_expansion = backend;
    b.score_reranking = backend;
    b.score_answer = backend;
    b.propose = backend;
    return b;
}

void RoleBackends::validate() const {
    if (!expand || !rank || !answer || !score_expansion || !score_reranking || !score_answer)
        throw Error("every role must be bound to a backend");
}

ExpansionChoice expand_query(const Question& q, const PromptSet& prompts,
                             const PipelineConfig& cfg, const RoleBackends& backends) {
    GenOptions gen{cfg.temperature, cfg.random_seed};
    auto candidates = generate_expansions(q, prompts.theta_e, cfg.m_expansions,
                                          *backends.expand, gen, prompts.version);

    ExpansionChoice choice;
    double best = -1.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        GenOptions score_opts{0.0, cfg.random_seed + static_cast<long>(i)};
        Score s = score_expansion(candidates[i], q, *backends.score_expansion,
                                  "score expansion", score_opts)
                      .score;
        if (s.value() > best) {
            best = s.value();
            choice.best_index = static_cast<int>(i);
        }
        choice.all.emplace_back(candidates[i], s);
    }
    choice.best = candidates[static_cast<size_t>(choice.best_index)];
    return choice;
}

DocumentSelection select_documents(const Question& q, const Expansion& e,
                                   const PromptSet& prompts, const PipelineConfig& cfg,
                                   const Retriever& retriever, const RoleBackends& backends) {
    DocumentSelection selection;
    std::string query_text = q.text + " " + e.text;
    selection.retrieved = retriever(q, query_text);
    if (static_cast<int>(selection.retrieved.size()) > cfg.n_retrieve)
        selection.retrieved.resize(static_cast<size_t>(cfg.n_retrieve));

    if (selection.retrieved.empty()) {
        selection.empty_retrieval_warning = true;
        return selection;
    }

    WindowRanker ranker = make_backend_window_ranker(*backends.rank, cfg.temperature);
    RerankEvaluator evaluator = [&](const std::vector<Document>& docs) {
        return score_reranking(docs, q, e, *backends.score_reranking).score;
    };
    RerankCandidates reranked =
        rerank_with_candidates(selection.retrieved, q, e, prompts.theta_d, cfg.window, ranker,
                               evaluator, cfg.rerank_candidates, cfg.random_seed);
    selection.docs = std::move(reranked.best);
    selection.rerank_candidates = std::move(reranked.candidates);
    selection.windows_invoked = reranked.windows_invoked;
    selection.windows_fallback = reranked.windows_fallback;
    return selection;
}

std::vector<std::string> assemble_evidence(const Expansion& e,
                                           const std::vector<Document>& docs,
                                           InsertionLocation location, long seed) {
    std::vector<std::string> evidence;
    evidence.reserve(docs.size() + 1);
    for (const auto& d : docs)
        evidence.push_back(d.title.empty() ? d.text : d.title + ". " + d.text);

    size_t position = 0;
    switch (location) {
        case InsertionLocation::first: position = 0; break;
        case InsertionLocation::last: position = evidence.size(); break;
        case InsertionLocation::random: {
            std::mt19937_64 rng(static_cast<uint64_t>(seed));
            std::uniform_int_distribution<size_t> dist(0, evidence.size());
            position = dist(rng);
            break;
        }
    }
    evidence.insert(evidence.begin() + static_cast<long>(position), e.text);
    return evidence;
}

Trace run_pipeline(const Question& q, const PromptSet& prompts, const PipelineConfig& cfg,
                   const Retriever& retriever, const RoleBackends& backends) {
    cfg.validate();
    backends.validate();

    Trace trace;
    trace.question_id = q.id;
    trace.prompt_version = prompts.version;
    StageTimer timer(trace);

    try {
        ExpansionChoice expansion = expand_query(q, prompts, cfg, backends);
        trace.expansion_candidates = std::move(expansion.all);
        trace.chosen_expansion = expansion.best;
        timer.record("expansion");

        DocumentSelection selection =
            select_documents(q, trace.chosen_expansion, prompts, cfg, retriever, backends);
        trace.retrieved = std::move(selection.retrieved);
        trace.reranked = std::move(selection.docs);
        trace.rerank_candidates = std::move(selection.rerank_candidates);
        trace.windows_total = selection.windows_invoked;
        trace.windows_fallback = selection.windows_fallback;
        trace.empty_retrieval_warning = selection.empty_retrieval_warning;
        timer.record("selection");

        auto evidence = assemble_evidence(trace.chosen_expansion, trace.reranked,
                                          cfg.insertion_location, cfg.random_seed);
        GenOptions gen{cfg.temperature, cfg.random_seed};
        trace.answer = generate_answer(q, evidence, prompts.theta_a, *backends.answer, gen);
        timer.record("answer");
    } catch (const Error& e) {
        throw StageError(std::string("pipeline stage failed for question ") + q.id + ": " +
                             e.what(),
                         std::move(trace));
    }
    return trace;
}

}  // namespace llmqa
