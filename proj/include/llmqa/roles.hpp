#pragma once
// Uniform abstraction for every LLM role: generators (expansion, answer),
// the window reranker, the evaluators, and the prompt-rewrite calls used by
// training. Backends are interchangeable: deterministic mock, scripted
// request->response tables, and a remote chat-style HTTP endpoint. A caching
// decorator persists responses keyed by a digest of the full request.

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "llmqa/core.hpp"

namespace llmqa {

enum class RoleKind {
    expand,
    rank_window,
    answer,
    score_expansion,
    score_reranking,
    score_answer,
    propose_expand,
    propose_rerank,
    propose_answer,
};

std::string role_kind_name(RoleKind kind);
RoleKind role_kind_from_name(const std::string& name);

// Ordered context fields; key order is part of the request identity.
using ContextFields = std::vector<std::pair<std::string, std::string>>;

struct RoleRequest {
    RoleKind role_kind = RoleKind::expand;
    std::string prompt;            // the theta in effect
    ContextFields context_fields;  // q, e, document texts, gold answer, ...
    double temperature = 0.0;
    int sample_count = 1;
    long seed = 0;  // honored by mock/scripted backends only
};

struct RoleResponse {
    std::vector<std::string> samples;
    std::string backend_id;
    bool cached = false;
};

// SHA-256 hex digest of the context fields alone; used by scripted tables.
std::string context_digest(const ContextFields& fields);

// SHA-256 hex digest of the full request plus backend id; the cache key.
std::string request_digest(const RoleRequest& request, const std::string& backend_id);

class Backend {
public:
    virtual ~Backend() = default;
    virtual RoleResponse call(const RoleRequest& request) = 0;
    virtual std::string id() const = 0;
};

// Pure function of (request fields, seed): identical requests yield
// identical responses. Emits plausible text per role kind; answers can be
// pinned per question text.
class MockBackend : public Backend {
public:
    explicit MockBackend(long seed = 0) : seed_(seed) {}

    RoleResponse call(const RoleRequest& request) override;
    std::string id() const override { return "mock"; }

    void set_canned_answer(const std::string& question_text, const std::string& answer);

private:
    long seed_;
    std::unordered_map<std::string, std::string> canned_answers_;
};

// Exact request->response tables plus per-role FIFO queues. Table entries
// match on (role_kind, context_digest); queue entries are consumed in push
// order when no table entry matches. Used by all algorithm tests.
class ScriptedBackend : public Backend {
public:
    RoleResponse call(const RoleRequest& request) override;
    std::string id() const override { return "scripted"; }

    void add(RoleKind kind, const ContextFields& context, std::vector<std::string> samples);
    void add_by_digest(RoleKind kind, const std::string& digest, std::vector<std::string> samples);
    void push(RoleKind kind, std::vector<std::string> samples);

    // JSON-lines of {"match": {"role_kind", "context_digest"}, "samples": [...]}.
    static std::shared_ptr<ScriptedBackend> load(const std::string& path);

    int call_count(RoleKind kind) const;
    int total_calls() const;

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::vector<std::string>> table_;
    std::unordered_map<int, std::vector<std::vector<std::string>>> queues_;
    std::unordered_map<int, size_t> queue_pos_;
    std::unordered_map<int, int> calls_;
};

struct HttpBackendConfig {
    std::string endpoint;       // e.g. http://host:port/v1/chat/completions
    std::string model;
    std::string api_key_env;    // environment variable holding the bearer token
    int timeout_seconds = 60;
    int transport_retries = 2;  // retries on transport/non-200 failures
};

// Remote chat-style endpoint. Request: {model, messages, temperature, n};
// response: {choices: [{message: {content}}]}.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    RoleResponse call(const RoleRequest& request) override;
    std::string id() const override;

private:
    HttpBackendConfig config_;
};

// Decorator persisting responses under cache_dir, one JSON file per request
// digest, written atomically (write to temp + rename). Cache I/O failures
// degrade to an uncached call.
class CachingBackend : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::string cache_dir);
    RoleResponse call(const RoleRequest& request) override;
    std::string id() const override { return inner_->id(); }

private:
    std::shared_ptr<Backend> inner_;
    std::string cache_dir_;
};

RoleResponse call_with_cache(const RoleRequest& request, Backend& backend,
                             const std::string& cache_dir);

// ---- Role operations -------------------------------------------------------

struct GenOptions {
    double temperature = 0.7;
    long seed = 0;
};

// m candidate expansions. Empty samples get one retry, then are dropped with
// a warning, so the result may be shorter than m only after a failed retry.
std::vector<Expansion> generate_expansions(const Question& q,
                                           const std::string& theta_e,
                                           int m,
                                           Backend& backend,
                                           const GenOptions& options = {},
                                           int prompt_version = 0);

// Posterior-conditioned expansion sampling: the context additionally carries
// the prior expansion, the best posterior documents, and the gold answer.
std::vector<Expansion> generate_posterior_expansions(const Question& q,
                                                     const Expansion& prior,
                                                     const std::vector<Document>& docs,
                                                     const GoldAnswers& gold,
                                                     const std::string& theta_e,
                                                     int m,
                                                     Backend& backend,
                                                     const GenOptions& options = {},
                                                     int prompt_version = 0);

struct WindowRanking {
    std::vector<Document> docs;
    bool fallback = false;  // malformed or non-permutation backend output
};

// Backend emits "[i1] > [i2] > ... > [iw]" over 1-based in-window indices;
// parse failure or a non-permutation falls back to the input order.
WindowRanking rank_window(const Question& q,
                          const Expansion& e,
                          const std::vector<Document>& window,
                          const std::string& theta_d,
                          Backend& backend,
                          const GenOptions& options = {});

// Extracts a 1-based index permutation from ranking text; nullopt on
// malformed or non-permutation output. Tolerates surrounding prose.
std::optional<std::vector<int>> parse_ranking(const std::string& text, int window_size);

// First sample, whitespace-trimmed; empty after one retry is a stage error.
// evidence holds the already-assembled evidence texts in reading order.
std::string generate_answer(const Question& q,
                            const std::vector<std::string>& evidence,
                            const std::string& theta_a,
                            Backend& backend,
                            const GenOptions& options = {});

struct ScoredValue {
    Score score;
    bool parse_warning = false;  // unparseable backend output scored 0.0
};

ScoredValue score_expansion(const Expansion& candidate, const Question& q,
                            Backend& backend, const std::string& prompt = "score expansion",
                            const GenOptions& options = {});

ScoredValue score_reranking(const std::vector<Document>& candidate_docs, const Question& q,
                            const Expansion& e, Backend& backend,
                            const std::string& prompt = "score reranking",
                            const GenOptions& options = {});

ScoredValue score_answer(const GoldAnswers& gold, const Question& q, const Expansion& e,
                         const std::vector<Document>& docs, Backend& backend,
                         const std::string& prompt = "score answer",
                         const GenOptions& options = {});

// Renders a document list into a single evaluator context string.
std::string render_documents(const std::vector<Document>& docs);

// Renders one document for the ranker context: "[i] title. first T tokens".
std::string render_window_entry(const Document& doc, int index_1based, int max_tokens);

}  // namespace llmqa
