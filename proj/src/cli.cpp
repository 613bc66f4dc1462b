#include "llmqa/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <thread>

#include "llmqa/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace llmqa {

namespace {

const char* kRoleNames[] = {"expand",          "rank_window",     "answer",
                            "score_expansion", "score_reranking", "score_answer",
                            "propose"};

std::shared_ptr<Backend> build_backend(const json& spec) {
    std::string type = spec.at("type").get<std::string>();
    if (type == "mock") {
        auto mock = std::make_shared<MockBackend>(spec.value("seed", 0L));
        if (spec.contains("canned_answers"))
            for (const auto& [q, a] : spec.at("canned_answers").items())
                mock->set_canned_answer(q, a.get<std::string>());
        return mock;
    }
    if (type == "scripted") return ScriptedBackend::load(spec.at("path").get<std::string>());
    if (type == "http") {
        HttpBackendConfig config;
        config.endpoint = spec.at("endpoint").get<std::string>();
        config.model = spec.value("model", std::string{"default"});
        config.api_key_env = spec.value("api_key_env", std::string{});
        config.timeout_seconds = spec.value("timeout_seconds", 60);
        config.transport_retries = spec.value("transport_retries", 2);
        return std::make_shared<HttpBackend>(config);
    }
    throw Error("unknown backend type: " + type);
}

}  // namespace

RunConfig run_config_from_json(const json& obj) {
    RunConfig config;
    if (obj.contains("retrieval")) {
        const auto& r = obj.at("retrieval");
        config.retrieval.n = r.value("n", config.retrieval.n);
        config.retrieval.k1 = r.value("k1", config.retrieval.k1);
        config.retrieval.b = r.value("b", config.retrieval.b);
        config.retrieval.remove_stopwords = r.value("remove_stopwords", false);
        config.retrieval.stem = r.value("stem", false);
        if (r.contains("external_scores_path") && !r.at("external_scores_path").is_null())
            config.retrieval.external_scores_path =
                r.at("external_scores_path").get<std::string>();
    }
    if (obj.contains("pipeline")) {
        const auto& p = obj.at("pipeline");
        config.pipeline.m_expansions = p.value("m_expansions", config.pipeline.m_expansions);
        config.pipeline.n_retrieve = p.value("n_retrieve", config.pipeline.n_retrieve);
        if (p.contains("window"))
            config.pipeline.window = WindowConfig(p.at("window").value("w", 20),
                                                  p.at("window").value("l", 10));
        config.pipeline.rerank_candidates =
            p.value("rerank_candidates", config.pipeline.rerank_candidates);
        config.pipeline.insertion_location = insertion_location_from_name(
            p.value("insertion_location", std::string{"first"}));
        config.pipeline.temperature = p.value("temperature", config.pipeline.temperature);
    }
    if (obj.contains("train")) {
        const auto& t = obj.at("train");
        config.train.n_doc_posteriors =
            t.value("n_doc_posteriors", config.train.n_doc_posteriors);
        config.train.m_exp_posteriors =
            t.value("m_exp_posteriors", config.train.m_exp_posteriors);
        config.train.k_prompt_candidates =
            t.value("k_prompt_candidates", config.train.k_prompt_candidates);
        config.train.epsilon_log_floor =
            t.value("epsilon_log_floor", config.train.epsilon_log_floor);
        config.train.include_incumbent =
            t.value("include_incumbent", config.train.include_incumbent);
        if (t.contains("max_examples") && !t.at("max_examples").is_null())
            config.train.max_examples = t.at("max_examples").get<int>();
    }
    config.backends = obj.value("backends", json{{"default", {{"type", "mock"}}}});
    config.cache_dir = obj.value("cache_dir", std::string{});
    config.seed = obj.value("seed", 0L);
    config.workers = obj.value("workers", 1);
    if (config.workers < 1) throw Error("config: workers must be >= 1");

    // Fail fast on invariant violations, before any backend is constructed.
    config.pipeline.validate();
    config.train.validate();
    if (config.retrieval.n < 1) throw Error("config: retrieval.n must be >= 1");
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path);
    try {
        return run_config_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw Error(path + ": config parse error: " + e.what());
    }
}

RoleBackends make_backends(const RunConfig& config) {
    std::map<std::string, std::shared_ptr<Backend>> built;
    auto backend_for = [&](const std::string& role) -> std::shared_ptr<Backend> {
        json spec;
        if (config.backends.contains(role))
            spec = config.backends.at(role);
        else if (config.backends.contains("default"))
            spec = config.backends.at("default");
        else
            throw Error("no backend bound for role: " + role);
        std::string key = spec.dump();
        auto it = built.find(key);
        std::shared_ptr<Backend> backend;
        if (it != built.end()) {
            backend = it->second;
        } else {
            backend = build_backend(spec);
            built[key] = backend;
        }
        if (!config.cache_dir.empty())
            return std::make_shared<CachingBackend>(backend, config.cache_dir);
        return backend;
    };

    RoleBackends backends;
    backends.expand = backend_for("expand");
    backends.rank = backend_for("rank_window");
    backends.answer = backend_for("answer");
    backends.score_expansion = backend_for("score_expansion");
    backends.score_reranking = backend_for("score_reranking");
    backends.score_answer = backend_for("score_answer");
    backends.propose = backend_for("propose");
    backends.validate();
    return backends;
}

int cmd_index(const IndexArgs& args) {
    try {
        auto corpus = load_corpus(args.corpus_path);
        CorpusIndex index = build_index(corpus, args.remove_stopwords, args.stem);
        save_index(index, args.out_path);
        std::printf("%ld documents indexed, %zu terms, avg length %.2f tokens\n",
                    index.doc_count, index.postings.size(), index.avg_doc_length);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

namespace {

struct RunSetup {
    RunConfig config;
    std::vector<DatasetEntry> dataset;
    CorpusIndex index;
    PromptStore prompts;
    RoleBackends backends;
    Retriever retriever;
};

RunSetup load_run_setup(const std::string& dataset_path, const std::string& index_path,
                        const std::string& prompts_path, const std::string& config_path,
                        long seed_override) {
    RunSetup setup;
    setup.config = load_run_config(config_path);
    if (seed_override >= 0) setup.config.seed = seed_override;
    setup.config.pipeline.random_seed = setup.config.seed;
    setup.dataset = load_dataset(dataset_path);
    setup.index = load_index(index_path);
    setup.prompts = load_prompt_store(prompts_path);
    setup.backends = make_backends(setup.config);
    return setup;
}

}  // namespace

int cmd_run(const RunArgs& args) {
    try {
        RunSetup setup = load_run_setup(args.dataset_path, args.index_path, args.prompts_path,
                                        args.config_path, args.seed_override);
        if (args.workers_override > 0) setup.config.workers = args.workers_override;
        setup.config.retrieval.n = setup.config.pipeline.n_retrieve;
        Retriever retriever =
            setup.config.retrieval.external_scores_path
                ? import_external_scores(setup.index,
                                         *setup.config.retrieval.external_scores_path,
                                         setup.config.retrieval)
                : make_bm25_retriever(setup.index, setup.config.retrieval);

        const size_t total = setup.dataset.size();
        std::vector<std::optional<Trace>> slots(total);
        std::atomic<size_t> next{0};
        std::atomic<int> failures{0};

        auto worker = [&] {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= total) break;
                const auto& entry = setup.dataset[i];
                try {
                    slots[i] = run_pipeline(entry.question, setup.prompts.prompts,
                                            setup.config.pipeline, retriever, setup.backends);
                } catch (const std::exception& e) {
                    std::fprintf(stderr, "example %s failed: %s\n", entry.question.id.c_str(),
                                 e.what());
                    failures.fetch_add(1);
                }
            }
        };

        int workers = std::min<int>(setup.config.workers, static_cast<int>(total));
        if (workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        std::vector<Trace> traces;
        long windows = 0, fallbacks = 0;
        for (auto& slot : slots)
            if (slot) {
                windows += slot->windows_total;
                fallbacks += slot->windows_fallback;
                traces.push_back(std::move(*slot));
            }
        save_traces(traces, args.out_path, !args.deterministic_compare);

        std::printf("%zu/%zu traces written to %s\n", traces.size(), total,
                    args.out_path.c_str());
        std::printf("window fallback rate: %.4f (%ld/%ld)\n",
                    windows ? static_cast<double>(fallbacks) / windows : 0.0, fallbacks,
                    windows);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int cmd_train(const TrainArgs& args) {
    try {
        RunSetup setup = load_run_setup(args.dataset_path, args.index_path, args.prompts_path,
                                        args.config_path, args.seed_override);
        setup.config.retrieval.n = setup.config.pipeline.n_retrieve;
        Retriever retriever = make_bm25_retriever(setup.index, setup.config.retrieval);

        fs::create_directories(args.out_dir);
        fs::path log_path = fs::path(args.out_dir) / "train_log.jsonl";
        fs::path final_path = fs::path(args.out_dir) / "prompts.json";

        size_t limit = setup.dataset.size();
        if (setup.config.train.max_examples)
            limit = std::min(limit, static_cast<size_t>(*setup.config.train.max_examples));

        size_t start_step = 0;
        PromptStore store = setup.prompts;
        if (args.resume && fs::exists(log_path)) {
            std::ifstream log_in(log_path);
            std::string line;
            while (std::getline(log_in, line))
                if (!trim(line).empty()) ++start_step;
            if (start_step > 0) {
                fs::path checkpoint = fs::path(args.out_dir) /
                                      ("prompts_step_" + std::to_string(start_step - 1) + ".json");
                store = load_prompt_store(checkpoint.string());
            }
            std::printf("resuming at step %zu\n", start_step);
        } else if (fs::exists(log_path)) {
            fs::remove(log_path);
        }

        std::ofstream log_out(log_path, std::ios::app);
        for (size_t i = start_step; i < limit; ++i) {
            const auto& example = setup.dataset[i];
            StepResult step = train_step(example.question, example.gold, store.prompts,
                                         setup.config.train, setup.config.pipeline, retriever,
                                         setup.backends,
                                         setup.config.seed + static_cast<long>(i) * 1000003L);
            store.prompts = step.prompts;
            std::string report_ref = "step_" + std::to_string(i);
            if (!step.report.skipped)
                store.history.push_back({store.prompts.version, report_ref});
            log_out << step_report_to_json(step.report).dump() << '\n';
            log_out.flush();
            fs::path checkpoint =
                fs::path(args.out_dir) / ("prompts_step_" + std::to_string(i) + ".json");
            save_prompt_store(store, checkpoint.string());
            std::printf("step %zu/%zu: version %d%s\n", i + 1, limit, store.prompts.version,
                        step.report.skipped ? " (skipped)" : "");
        }
        save_prompt_store(store, final_path.string());
        std::printf("final prompt store written to %s (version %d)\n",
                    final_path.string().c_str(), store.prompts.version);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int cmd_eval(const EvalArgs& args) {
    try {
        auto traces = load_traces(args.traces_path);
        auto dataset = load_dataset(args.dataset_path);
        EvalReport report = evaluate(traces, dataset, args.ks, args.bootstrap_rounds, args.seed,
                                     args.include_expansion);
        std::string table = render_report(report, args.ks);
        std::fputs(table.c_str(), stdout);
        json obj = eval_report_to_json(report);
        if (!args.report_out.empty()) write_file_atomic(args.report_out, obj.dump(2));
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

std::string rerank_strategy_name(RerankStrategy strategy) {
    switch (strategy) {
        case RerankStrategy::sliding: return "sliding";
        case RerankStrategy::retrieval_score: return "retrieval-score";
        case RerankStrategy::random_order: return "random";
    }
    return "sliding";
}

std::map<std::string, EvalReport> compare_rerank_strategies(const CompareArgs& args) {
    RunSetup setup = load_run_setup(args.dataset_path, args.index_path, args.prompts_path,
                                    args.config_path, args.seed_override);
    setup.config.retrieval.n = setup.config.pipeline.n_retrieve;
    Retriever retriever = make_bm25_retriever(setup.index, setup.config.retrieval);

    std::unordered_map<std::string, const GoldAnswers*> gold_by_id;
    for (const auto& entry : setup.dataset) gold_by_id[entry.question.id] = &entry.gold;

    // Oracle ranker: sort the window by gold-answer containment (stable).
    auto oracle_ranker = [&](const Question& q, const Expansion&,
                             const std::vector<Document>& window, const std::string&,
                             long) -> WindowRanking {
        const GoldAnswers* gold = gold_by_id.at(q.id);
        WindowRanking out;
        out.docs = window;
        std::stable_sort(out.docs.begin(), out.docs.end(),
                         [&](const Document& a, const Document& b) {
                             return answer_hit({a}, *gold) > answer_hit({b}, *gold);
                         });
        return out;
    };

    std::map<std::string, EvalReport> results;
    for (RerankStrategy strategy : {RerankStrategy::sliding, RerankStrategy::retrieval_score,
                                    RerankStrategy::random_order}) {
        std::vector<Trace> traces;
        for (const auto& entry : setup.dataset) {
            Trace trace;
            if (strategy == RerankStrategy::sliding && args.oracle_ranker) {
                // Same pipeline, oracle window ordering.
                ExpansionChoice expansion =
                    expand_query(entry.question, setup.prompts.prompts, setup.config.pipeline,
                                 setup.backends);
                trace.question_id = entry.question.id;
                trace.prompt_version = setup.prompts.prompts.version;
                trace.expansion_candidates = expansion.all;
                trace.chosen_expansion = expansion.best;
                std::string query = entry.question.text + " " + expansion.best.text;
                trace.retrieved = retriever(entry.question, query);
                if (!trace.retrieved.empty()) {
                    RerankResult rr = sliding_window_rerank(
                        trace.retrieved, entry.question, expansion.best,
                        setup.prompts.prompts.theta_d, setup.config.pipeline.window,
                        oracle_ranker, setup.config.seed);
                    trace.reranked = rr.docs;
                    trace.windows_total = rr.windows_invoked;
                    trace.windows_fallback = rr.windows_fallback;
                    trace.rerank_candidates.emplace_back(trace.reranked, Score(1.0));
                }
                auto evidence =
                    assemble_evidence(trace.chosen_expansion, trace.reranked,
                                      setup.config.pipeline.insertion_location,
                                      setup.config.seed);
                trace.answer = generate_answer(entry.question, evidence,
                                               setup.prompts.prompts.theta_a,
                                               *setup.backends.answer,
                                               {setup.config.pipeline.temperature,
                                                setup.config.seed});
            } else if (strategy == RerankStrategy::sliding) {
                trace = run_pipeline(entry.question, setup.prompts.prompts,
                                     setup.config.pipeline, retriever, setup.backends);
            } else {
                ExpansionChoice expansion =
                    expand_query(entry.question, setup.prompts.prompts, setup.config.pipeline,
                                 setup.backends);
                trace.question_id = entry.question.id;
                trace.prompt_version = setup.prompts.prompts.version;
                trace.expansion_candidates = expansion.all;
                trace.chosen_expansion = expansion.best;
                std::string query = entry.question.text + " " + expansion.best.text;
                trace.retrieved = retriever(entry.question, query);
                std::vector<Document> order = trace.retrieved;
                if (strategy == RerankStrategy::random_order) {
                    std::mt19937_64 rng(static_cast<uint64_t>(setup.config.seed));
                    std::shuffle(order.begin(), order.end(), rng);
                }
                int k = std::min<int>(setup.config.pipeline.window.k(),
                                      static_cast<int>(order.size()));
                order.resize(static_cast<size_t>(std::max(k, 0)));
                for (size_t r = 0; r < order.size(); ++r)
                    order[r].rank = static_cast<int>(r);
                trace.reranked = order;
                trace.rerank_candidates.emplace_back(order, Score(1.0));
                auto evidence =
                    assemble_evidence(trace.chosen_expansion, trace.reranked,
                                      setup.config.pipeline.insertion_location,
                                      setup.config.seed);
                trace.answer = generate_answer(entry.question, evidence,
                                               setup.prompts.prompts.theta_a,
                                               *setup.backends.answer,
                                               {setup.config.pipeline.temperature,
                                                setup.config.seed});
            }
            traces.push_back(std::move(trace));
        }
        results[rerank_strategy_name(strategy)] =
            evaluate(traces, setup.dataset, args.ks, 0, setup.config.seed);
    }
    return results;
}

int cmd_compare_rerank(const CompareArgs& args) {
    try {
        auto results = compare_rerank_strategies(args);
        std::printf("%-18s %8s", "strategy", "EM");
        for (int k : args.ks) std::printf(" %11s", ("recall@" + std::to_string(k)).c_str());
        std::printf("\n");
        for (const char* name : {"sliding", "retrieval-score", "random"}) {
            const EvalReport& report = results.at(name);
            std::printf("%-18s %8.4f", name, report.em);
            for (int k : args.ks) std::printf(" %11.4f", report.recall_at.at(k));
            std::printf("\n");
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace llmqa
