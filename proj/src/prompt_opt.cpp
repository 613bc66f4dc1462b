#include "llmqa/prompt_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace llmqa {

namespace {

void warn(const std::string& message) {
    std::fprintf(stderr, "[llmqa] warning: %s\n", message.c_str());
}

double safe_score(const std::function<Score()>& call) {
    try {
        return call().value();
    } catch (const std::exception& e) {
        warn(std::string("role call failed, candidate scored 0: ") + e.what());
        return 0.0;
    }
}

int argmax_lowest(const std::vector<double>& values) {
    int best = 0;
    for (size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

}  // namespace

void TrainConfig::validate() const {
    if (n_doc_posteriors < 1) throw Error("TrainConfig: n_doc_posteriors must be >= 1");
    if (m_exp_posteriors < 1) throw Error("TrainConfig: m_exp_posteriors must be >= 1");
    if (k_prompt_candidates < 1) throw Error("TrainConfig: k_prompt_candidates must be >= 1");
    if (!(epsilon_log_floor > 0.0 && epsilon_log_floor < 1.0))
        throw Error("TrainConfig: epsilon_log_floor must be in (0, 1)");
    if (max_examples && *max_examples < 1)
        throw Error("TrainConfig: max_examples must be >= 1 when set");
}

std::string prompt_kind_name(PromptKind kind) {
    switch (kind) {
        case PromptKind::answer: return "answer";
        case PromptKind::rerank: return "rerank";
        case PromptKind::expand: return "expand";
    }
    return "answer";
}

Priors forward_priors(const Question& q, const PromptSet& prompts, const PipelineConfig& cfg,
                      const Retriever& retriever, const RoleBackends& backends) {
    GenOptions gen{cfg.temperature, cfg.random_seed};
    Priors priors;
    priors.expansion = generate_expansions(q, prompts.theta_e, 1, *backends.expand, gen,
                                           prompts.version)
                           .front();

    std::string query_text = q.text + " " + priors.expansion.text;
    priors.retrieved = retriever(q, query_text);
    if (static_cast<int>(priors.retrieved.size()) > cfg.n_retrieve)
        priors.retrieved.resize(static_cast<size_t>(cfg.n_retrieve));

    if (priors.retrieved.empty()) {
        priors.empty_retrieval = true;
    } else {
        WindowRanker ranker = make_backend_window_ranker(*backends.rank, cfg.temperature);
        priors.reranked = sliding_window_rerank(priors.retrieved, q, priors.expansion,
                                                prompts.theta_d, cfg.window, ranker,
                                                cfg.random_seed)
                              .docs;
    }

    auto evidence = assemble_evidence(priors.expansion, priors.reranked,
                                      cfg.insertion_location, cfg.random_seed);
    priors.answer = generate_answer(q, evidence, prompts.theta_a, *backends.answer, gen);
    return priors;
}

DocPosteriors sample_doc_posteriors(const Question& q, const Expansion& prior_e,
                                    const std::vector<Document>& prior_docs,
                                    const std::vector<Document>& retrieved,
                                    const GoldAnswers& gold, const TrainConfig& cfg,
                                    const RoleBackends& backends, long seed) {
    const int k = static_cast<int>(prior_docs.size());
    int surplus = static_cast<int>(retrieved.size()) - k;
    int count = std::min(cfg.n_doc_posteriors, std::max(surplus, 0));

    DocPosteriors out;
    auto score_candidate = [&](PosteriorDocCandidate& cand, long cand_seed) {
        cand.s_d = Score(safe_score([&] {
            return score_reranking(cand.docs, q, prior_e, *backends.score_reranking,
                                   "score reranking", {0.0, cand_seed})
                .score;
        }));
        cand.s_a = Score(safe_score([&] {
            return score_answer(gold, q, prior_e, cand.docs, *backends.score_answer,
                                "score answer", {0.0, cand_seed})
                .score;
        }));
        cand.v_d = cand.s_d.value() * cand.s_a.value();
    };

    if (count == 0) {
        PosteriorDocCandidate cand;
        cand.docs = prior_docs;
        cand.swapped_in_rank = -1;
        score_candidate(cand, seed);
        out.candidates.push_back(std::move(cand));
        out.best_index = 0;
        return out;
    }

    for (int i = 1; i <= count; ++i) {
        PosteriorDocCandidate cand;
        cand.docs = prior_docs;
        int source = k - 1 + i;  // position in the retrieved list
        cand.docs.back() = retrieved[static_cast<size_t>(source)];
        cand.docs.back().rank = k - 1;
        cand.swapped_in_rank = source;
        score_candidate(cand, seed + i);
        out.candidates.push_back(std::move(cand));
    }

    std::vector<double> v;
    for (const auto& c : out.candidates) v.push_back(c.v_d);
    out.best_index = argmax_lowest(v);
    return out;
}

ExpansionPosteriors sample_expansion_posteriors(const Question& q, const Expansion& prior_e,
                                                const std::vector<Document>& best_docs,
                                                const GoldAnswers& gold, const TrainConfig& cfg,
                                                const PipelineConfig& pipe_cfg,
                                                const RoleBackends& backends, long seed) {
    GenOptions gen{pipe_cfg.temperature, seed};
    // The posterior meta-prompt: a minor edit of the prior expansion, steered
    // by the gold answer carried in the context fields.
    auto expansions = generate_posterior_expansions(
        q, prior_e, best_docs, gold,
        "Minimally edit the prior expansion so it better supports the gold answer.",
        cfg.m_exp_posteriors, *backends.expand, gen);

    ExpansionPosteriors out;
    for (size_t j = 0; j < expansions.size(); ++j) {
        PosteriorExpansionCandidate cand;
        cand.expansion = expansions[j];
        long cand_seed = seed + static_cast<long>(j);
        cand.s_e = Score(safe_score([&] {
            return score_expansion(cand.expansion, q, *backends.score_expansion,
                                   "score expansion", {0.0, cand_seed})
                .score;
        }));
        cand.s_d = Score(safe_score([&] {
            return score_reranking(best_docs, q, cand.expansion, *backends.score_reranking,
                                   "score reranking", {0.0, cand_seed})
                .score;
        }));
        cand.s_a = Score(safe_score([&] {
            return score_answer(gold, q, cand.expansion, best_docs, *backends.score_answer,
                                "score answer", {0.0, cand_seed})
                .score;
        }));
        cand.v_e = cand.s_e.value() * cand.s_d.value() * cand.s_a.value();
        out.candidates.push_back(std::move(cand));
    }

    std::vector<double> v;
    for (const auto& c : out.candidates) v.push_back(c.v_e);
    out.best_index = argmax_lowest(v);
    return out;
}

std::vector<std::string> propose_prompts(PromptKind kind, const ProposeContext& context, int K,
                                         bool include_incumbent, Backend& backend,
                                         const GenOptions& options) {
    if (K < 1) throw Error("propose_prompts requires K >= 1");

    RoleKind role = kind == PromptKind::answer   ? RoleKind::propose_answer
                    : kind == PromptKind::rerank ? RoleKind::propose_rerank
                                                 : RoleKind::propose_expand;
    std::string meta_prompt =
        "Rewrite the instruction below so that the prior output moves toward the target. "
        "Return only the rewritten instruction.";
    ContextFields fields{{"current_prompt", context.current_prompt},
                         {"q", context.question},
                         {"prior_expansion", context.prior_expansion},
                         {"prior_docs", context.prior_docs},
                         {"prior_answer", context.prior_answer},
                         {"target", context.target}};
    RoleRequest request{role, meta_prompt, std::move(fields), options.temperature, K,
                        options.seed};

    std::vector<std::string> candidates;
    try {
        for (const auto& sample : backend.call(request).samples) {
            std::string text = trim(sample);
            if (!text.empty()) candidates.push_back(std::move(text));
        }
    } catch (const std::exception& e) {
        warn(std::string("prompt proposal failed, keeping incumbent: ") + e.what());
        return {context.current_prompt};
    }
    if (candidates.empty()) return {context.current_prompt};
    if (include_incumbent) candidates.push_back(context.current_prompt);
    return candidates;
}

PromptSelection select_prompt(PromptKind kind, const std::vector<std::string>& candidates,
                              const PosteriorGrid& grid, const TrainConfig& cfg,
                              const RoleBackends& backends, long seed) {
    if (candidates.empty()) throw Error("select_prompt requires at least one candidate");

    PromptSelection selection;
    const double eps = cfg.epsilon_log_floor;
    for (size_t c = 0; c < candidates.size(); ++c) {
        const std::string& prompt = candidates[c];
        double objective = 0.0;
        if (kind == PromptKind::expand) {
            for (size_t j = 0; j < grid.expansions.size(); ++j) {
                long cell_seed = seed + static_cast<long>(c * 1000 + j);
                double s = safe_score([&] {
                    return score_expansion(grid.expansions[j], grid.q,
                                           *backends.score_expansion, prompt, {0.0, cell_seed})
                        .score;
                });
                objective += grid.v_e[j] * std::log(std::max(s, eps));
            }
        } else {
            for (size_t i = 0; i < grid.doc_lists.size(); ++i) {
                for (size_t j = 0; j < grid.expansions.size(); ++j) {
                    long cell_seed =
                        seed + static_cast<long>(c * 100000 + i * 100 + j);
                    double s;
                    if (kind == PromptKind::answer) {
                        s = safe_score([&] {
                            return score_answer(grid.gold, grid.q, grid.expansions[j],
                                                grid.doc_lists[i], *backends.score_answer,
                                                prompt, {0.0, cell_seed})
                                .score;
                        });
                    } else {
                        s = safe_score([&] {
                            return score_reranking(grid.doc_lists[i], grid.q,
                                                   grid.expansions[j],
                                                   *backends.score_reranking, prompt,
                                                   {0.0, cell_seed})
                                .score;
                        });
                    }
                    objective += grid.v_e[j] * grid.v_d[i] * std::log(std::max(s, eps));
                }
            }
        }
        selection.objectives.push_back(objective);
    }
    selection.best_index = argmax_lowest(selection.objectives);
    selection.best = candidates[static_cast<size_t>(selection.best_index)];
    return selection;
}

StepResult train_step(const Question& q, const GoldAnswers& gold, const PromptSet& prompts,
                      const TrainConfig& cfg, const PipelineConfig& pipe_cfg,
                      const Retriever& retriever, const RoleBackends& backends, long seed) {
    cfg.validate();
    StepResult result{prompts, {}};
    StepReport& report = result.report;
    report.question_id = q.id;
    report.version_before = prompts.version;

    try {
        Priors priors = forward_priors(q, prompts, pipe_cfg, retriever, backends);
        report.prior_expansion = priors.expansion.text;
        report.prior_answer = priors.answer;

        DocPosteriors doc_post =
            sample_doc_posteriors(q, priors.expansion, priors.reranked, priors.retrieved, gold,
                                  cfg, backends, seed);
        report.doc_candidates = doc_post.candidates;
        report.best_doc_index = doc_post.best_index;
        const auto& best_docs =
            doc_post.candidates[static_cast<size_t>(doc_post.best_index)].docs;

        ExpansionPosteriors exp_post = sample_expansion_posteriors(
            q, priors.expansion, best_docs, gold, cfg, pipe_cfg, backends, seed);
        report.expansion_candidates = exp_post.candidates;
        report.best_expansion_index = exp_post.best_index;

        PosteriorGrid grid;
        grid.q = q;
        grid.gold = gold;
        for (const auto& c : exp_post.candidates) {
            grid.expansions.push_back(c.expansion);
            grid.v_e.push_back(c.v_e);
        }
        for (const auto& c : doc_post.candidates) {
            grid.doc_lists.push_back(c.docs);
            grid.v_d.push_back(c.v_d);
        }

        std::string prior_docs_rendered = render_documents(priors.reranked);
        GenOptions propose_opts{pipe_cfg.temperature, seed};
        auto run_update = [&](PromptKind kind, const std::string& current,
                              const std::string& target,
                              PromptUpdateReport& update) -> std::string {
            ProposeContext ctx{current,       q.text, priors.expansion.text,
                               prior_docs_rendered, priors.answer, target};
            auto candidates = propose_prompts(kind, ctx, cfg.k_prompt_candidates,
                                              cfg.include_incumbent, *backends.propose,
                                              propose_opts);
            int incumbent = -1;
            for (size_t i = 0; i < candidates.size(); ++i)
                if (candidates[i] == current) incumbent = static_cast<int>(i);
            PromptSelection sel =
                select_prompt(kind, candidates, grid, cfg, backends, seed);
            update.candidates = candidates;
            update.objectives = sel.objectives;
            update.selected_index = sel.best_index;
            update.incumbent_index = incumbent;
            return sel.best;
        };

        // Line order: theta_a, then theta_d, then theta_e; all selections use
        // the pre-step prompts except where a candidate is injected.
        std::string new_theta_a = run_update(PromptKind::answer, prompts.theta_a,
                                             gold.answers.front(), report.answer_update);
        std::string new_theta_d =
            run_update(PromptKind::rerank, prompts.theta_d, render_documents(best_docs),
                       report.rerank_update);
        const auto& best_exp =
            exp_post.candidates[static_cast<size_t>(exp_post.best_index)].expansion;
        std::string new_theta_e = run_update(PromptKind::expand, prompts.theta_e,
                                             best_exp.text, report.expand_update);

        result.prompts = prompts.with_prompts(new_theta_e, new_theta_d, new_theta_a);
        report.version_after = result.prompts.version;
    } catch (const Error& e) {
        warn(std::string("training step skipped for question ") + q.id + ": " + e.what());
        report.skipped = true;
        report.skip_reason = e.what();
        report.version_after = prompts.version;
        result.prompts = prompts;
    }
    return result;
}

TrainResult train(const std::vector<TrainExample>& dataset, const PromptSet& prompts,
                  const TrainConfig& cfg, const PipelineConfig& pipe_cfg,
                  const Retriever& retriever, const RoleBackends& backends,
                  const StepCallback& on_step, long seed) {
    if (dataset.empty()) throw Error("training dataset is empty");
    cfg.validate();

    size_t limit = dataset.size();
    if (cfg.max_examples)
        limit = std::min(limit, static_cast<size_t>(*cfg.max_examples));

    TrainResult result{prompts, {}};
    for (size_t i = 0; i < limit; ++i) {
        StepResult step = train_step(dataset[i].question, dataset[i].gold, result.prompts, cfg,
                                     pipe_cfg, retriever, backends,
                                     seed + static_cast<long>(i) * 1000003L);
        result.prompts = step.prompts;
        result.log.push_back(step.report);
        if (on_step) on_step(static_cast<int>(i), result.prompts, step.report);
    }
    return result;
}

}  // namespace llmqa
