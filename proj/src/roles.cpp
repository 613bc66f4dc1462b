#include "llmqa/roles.hpp"

#include "llmqa/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace fs = std::filesystem;

namespace llmqa {

namespace {

constexpr const char* kRoleKindNames[] = {
    "expand",          "rank_window",   "answer",
    "score_expansion", "score_reranking", "score_answer",
    "propose_expand",  "propose_rerank",  "propose_answer",
};

void warn(const std::string& message) {
    std::fprintf(stderr, "[llmqa] warning: %s\n", message.c_str());
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string serialize_context(const ContextFields& fields) {
    std::string buf;
    for (const auto& [key, value] : fields) {
        buf += key;
        buf += '\x1f';
        buf += value;
        buf += '\x1e';
    }
    return buf;
}

uint64_t fnv1a(const std::string& data, uint64_t seed = 1469598103934665603ULL) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::optional<double> parse_first_number(const std::string& text) {
    static const std::regex number_re(R"([-+]?(\d+\.?\d*|\.\d+))");
    std::smatch m;
    if (!std::regex_search(text, m, number_re)) return std::nullopt;
    try {
        return std::stod(m.str());
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::string context_value(const ContextFields& fields, const std::string& key) {
    for (const auto& [k, v] : fields)
        if (k == key) return v;
    return {};
}

}  // namespace

std::string role_kind_name(RoleKind kind) {
    return kRoleKindNames[static_cast<int>(kind)];
}

RoleKind role_kind_from_name(const std::string& name) {
    for (int i = 0; i < static_cast<int>(std::size(kRoleKindNames)); ++i)
        if (name == kRoleKindNames[i]) return static_cast<RoleKind>(i);
    throw Error("unknown role kind: " + name);
}

std::string context_digest(const ContextFields& fields) {
    return sha256_hex(serialize_context(fields));
}

std::string request_digest(const RoleRequest& request, const std::string& backend_id) {
    char num[64];
    std::snprintf(num, sizeof(num), "%.17g|%d|%ld", request.temperature, request.sample_count,
                  request.seed);
    std::string buf = backend_id + '\x1d' + role_kind_name(request.role_kind) + '\x1d' +
                      request.prompt + '\x1d' + serialize_context(request.context_fields) +
                      '\x1d' + num;
    return sha256_hex(buf);
}

// ---- MockBackend ------------------------------------------------------------

void MockBackend::set_canned_answer(const std::string& question_text, const std::string& answer) {
    canned_answers_[question_text] = answer;
}

RoleResponse MockBackend::call(const RoleRequest& request) {
    std::string base = role_kind_name(request.role_kind) + '\x1d' + request.prompt + '\x1d' +
                       serialize_context(request.context_fields) + '\x1d' +
                       std::to_string(seed_ + request.seed);
    RoleResponse response;
    response.backend_id = id();
    for (int i = 0; i < request.sample_count; ++i) {
        uint64_t h = fnv1a(base + '\x1d' + std::to_string(i));
        std::string sample;
        switch (request.role_kind) {
            case RoleKind::expand: {
                std::string q = context_value(request.context_fields, "q");
                sample = "Background for \"" + q + "\": note " + hex64(h).substr(0, 8) +
                         " variant " + std::to_string(i);
                break;
            }
            case RoleKind::rank_window: {
                int w = 0;
                try {
                    w = std::stoi(context_value(request.context_fields, "window_size"));
                } catch (const std::exception&) {
                    w = 1;
                }
                std::vector<int> order(static_cast<size_t>(std::max(w, 1)));
                std::iota(order.begin(), order.end(), 1);
                std::mt19937_64 rng(h);
                std::shuffle(order.begin(), order.end(), rng);
                std::string s;
                for (size_t j = 0; j < order.size(); ++j) {
                    if (j) s += " > ";
                    s += "[" + std::to_string(order[j]) + "]";
                }
                sample = s;
                break;
            }
            case RoleKind::answer: {
                std::string q = context_value(request.context_fields, "q");
                auto it = canned_answers_.find(q);
                sample = it != canned_answers_.end() ? it->second
                                                     : "answer-" + hex64(h).substr(0, 8);
                break;
            }
            case RoleKind::score_expansion:
            case RoleKind::score_reranking:
            case RoleKind::score_answer: {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(h % 1001) / 1000.0);
                sample = buf;
                break;
            }
            case RoleKind::propose_expand:
            case RoleKind::propose_rerank:
            case RoleKind::propose_answer: {
                sample = "Revised prompt " + hex64(h).substr(0, 8) + ": " + request.prompt;
                break;
            }
        }
        response.samples.push_back(std::move(sample));
    }
    return response;
}

// ---- ScriptedBackend --------------------------------------------------------

void ScriptedBackend::add(RoleKind kind, const ContextFields& context,
                          std::vector<std::string> samples) {
    add_by_digest(kind, context_digest(context), std::move(samples));
}

void ScriptedBackend::add_by_digest(RoleKind kind, const std::string& digest,
                                    std::vector<std::string> samples) {
    std::lock_guard lock(mutex_);
    table_[role_kind_name(kind) + ":" + digest] = std::move(samples);
}

void ScriptedBackend::push(RoleKind kind, std::vector<std::string> samples) {
    std::lock_guard lock(mutex_);
    queues_[static_cast<int>(kind)].push_back(std::move(samples));
}

RoleResponse ScriptedBackend::call(const RoleRequest& request) {
    std::lock_guard lock(mutex_);
    ++calls_[static_cast<int>(request.role_kind)];
    RoleResponse response;
    response.backend_id = id();

    auto key = role_kind_name(request.role_kind) + ":" + context_digest(request.context_fields);
    if (auto it = table_.find(key); it != table_.end()) {
        response.samples = it->second;
    } else {
        auto& queue = queues_[static_cast<int>(request.role_kind)];
        auto& pos = queue_pos_[static_cast<int>(request.role_kind)];
        if (pos >= queue.size())
            throw Error("scripted backend exhausted for role " +
                        role_kind_name(request.role_kind));
        response.samples = queue[pos++];
    }
    if (static_cast<int>(response.samples.size()) > request.sample_count)
        response.samples.resize(request.sample_count);
    return response;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scripted backend file: " + path);
    auto backend = std::make_shared<ScriptedBackend>();
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("scripted backend parse error at line " + std::to_string(line_no) +
                        ": " + e.what());
        }
        const auto& match = obj.at("match");
        RoleKind kind = role_kind_from_name(match.at("role_kind").get<std::string>());
        std::vector<std::string> samples = obj.at("samples").get<std::vector<std::string>>();
        if (match.contains("context_digest"))
            backend->add_by_digest(kind, match.at("context_digest").get<std::string>(),
                                   std::move(samples));
        else
            backend->push(kind, std::move(samples));
    }
    return backend;
}

int ScriptedBackend::call_count(RoleKind kind) const {
    std::lock_guard lock(mutex_);
    auto it = calls_.find(static_cast<int>(kind));
    return it == calls_.end() ? 0 : it->second;
}

int ScriptedBackend::total_calls() const {
    std::lock_guard lock(mutex_);
    int total = 0;
    for (const auto& [kind, count] : calls_) total += count;
    return total;
}

// ---- HttpBackend ------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw Error("HTTP backend requires an endpoint");
}

std::string HttpBackend::id() const { return "http:" + config_.model; }

RoleResponse HttpBackend::call(const RoleRequest& request) {
    // Split endpoint into base URL and path.
    auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw Error("bad endpoint: " + config_.endpoint);
    auto path_start = config_.endpoint.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos ? config_.endpoint
                                                       : config_.endpoint.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/"
                                                       : config_.endpoint.substr(path_start);

    std::string content = request.prompt;
    for (const auto& [key, value] : request.context_fields)
        content += "\n\n" + key + ":\n" + value;

    nlohmann::json body = {
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
        {"temperature", request.temperature},
        {"n", request.sample_count},
    };

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* token = std::getenv(config_.api_key_env.c_str());
        if (!token)
            throw Error("environment variable not set: " + config_.api_key_env);
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string last_error;
    for (int attempt = 0; attempt <= config_.transport_retries; ++attempt) {
        httplib::Client client(base);
        client.set_read_timeout(config_.timeout_seconds, 0);
        auto result = client.Post(path, headers, body.dump(), "application/json");
        if (!result) {
            last_error = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status != 200) {
            last_error = "HTTP " + std::to_string(result->status) + ": " + result->body;
            continue;
        }
        try {
            auto parsed = nlohmann::json::parse(result->body);
            RoleResponse response;
            response.backend_id = id();
            for (const auto& choice : parsed.at("choices"))
                response.samples.push_back(
                    choice.at("message").at("content").get<std::string>());
            if (response.samples.empty()) throw Error("response contained no choices");
            return response;
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("bad response body: ") + e.what();
        }
    }
    throw Error("HTTP backend failed after retries: " + last_error);
}

// ---- CachingBackend ---------------------------------------------------------

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, std::string cache_dir)
    : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {}

RoleResponse CachingBackend::call(const RoleRequest& request) {
    return call_with_cache(request, *inner_, cache_dir_);
}

RoleResponse call_with_cache(const RoleRequest& request, Backend& backend,
                             const std::string& cache_dir) {
    std::string key = request_digest(request, backend.id());
    fs::path entry = fs::path(cache_dir) / (key + ".json");

    std::error_code ec;
    if (fs::exists(entry, ec)) {
        try {
            std::ifstream in(entry);
            nlohmann::json obj = nlohmann::json::parse(in);
            RoleResponse response;
            response.samples = obj.at("samples").get<std::vector<std::string>>();
            response.backend_id = obj.at("backend_id").get<std::string>();
            response.cached = true;
            return response;
        } catch (const std::exception& e) {
            warn(std::string("cache read failed, calling backend: ") + e.what());
        }
    }

    RoleResponse response = backend.call(request);
    try {
        fs::create_directories(cache_dir);
        nlohmann::json obj = {{"samples", response.samples},
                              {"backend_id", response.backend_id}};
        fs::path tmp = entry;
        tmp += ".tmp." + std::to_string(
                             std::hash<std::thread::id>{}(std::this_thread::get_id()));
        {
            std::ofstream out(tmp);
            out << obj.dump();
            if (!out) throw Error("write failed");
        }
        fs::rename(tmp, entry);
    } catch (const std::exception& e) {
        warn(std::string("cache write failed: ") + e.what());
    }
    return response;
}

// ---- Role operations --------------------------------------------------------

namespace {

RoleResponse call_backend(Backend& backend, const RoleRequest& request) {
    try {
        return backend.call(request);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("backend call failed: ") + e.what());
    }
}

}  // namespace

std::vector<Expansion> generate_expansions(const Question& q, const std::string& theta_e, int m,
                                           Backend& backend, const GenOptions& options,
                                           int prompt_version) {
    if (m < 1) throw Error("generate_expansions requires m >= 1");
    RoleRequest request{RoleKind::expand, theta_e, {{"q", q.text}},
                        options.temperature, m, options.seed};
    RoleResponse response = call_backend(backend, request);

    std::vector<Expansion> expansions;
    for (size_t i = 0; i < response.samples.size(); ++i) {
        std::string text = trim(response.samples[i]);
        if (text.empty()) {
            RoleRequest retry = request;
            retry.sample_count = 1;
            retry.seed = options.seed + 7919 + static_cast<long>(i);
            text = trim(call_backend(backend, retry).samples.at(0));
            if (text.empty()) {
                warn("expansion sample empty after retry; dropped");
                continue;
            }
        }
        expansions.emplace_back(std::move(text), prompt_version);
    }
    if (expansions.empty()) throw Error("expansion stage produced no usable candidates");
    return expansions;
}

std::vector<Expansion> generate_posterior_expansions(const Question& q, const Expansion& prior,
                                                     const std::vector<Document>& docs,
                                                     const GoldAnswers& gold,
                                                     const std::string& theta_e, int m,
                                                     Backend& backend, const GenOptions& options,
                                                     int prompt_version) {
    if (m < 1) throw Error("generate_posterior_expansions requires m >= 1");
    ContextFields context{{"q", q.text},
                          {"prior_expansion", prior.text},
                          {"docs", render_documents(docs)},
                          {"gold", gold.answers.front()}};
    RoleRequest request{RoleKind::expand, theta_e, std::move(context),
                        options.temperature, m, options.seed};
    RoleResponse response = call_backend(backend, request);
    std::vector<Expansion> expansions;
    for (const auto& sample : response.samples) {
        std::string text = trim(sample);
        if (text.empty()) {
            warn("posterior expansion sample empty; dropped");
            continue;
        }
        expansions.emplace_back(std::move(text), prompt_version);
    }
    if (expansions.empty()) throw Error("posterior expansion sampling produced no candidates");
    return expansions;
}

std::optional<std::vector<int>> parse_ranking(const std::string& text, int window_size) {
    static const std::regex index_re(R"(\[(\d+)\])");
    std::vector<int> indices;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), index_re);
         it != std::sregex_iterator(); ++it) {
        try {
            indices.push_back(std::stoi((*it)[1].str()));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    if (static_cast<int>(indices.size()) != window_size) return std::nullopt;
    std::vector<bool> seen(static_cast<size_t>(window_size), false);
    for (int idx : indices) {
        if (idx < 1 || idx > window_size || seen[static_cast<size_t>(idx - 1)])
            return std::nullopt;
        seen[static_cast<size_t>(idx - 1)] = true;
    }
    return indices;
}

std::string render_window_entry(const Document& doc, int index_1based, int max_tokens) {
    std::string text = doc.text;
    auto tokens = tokenize(text);
    if (static_cast<int>(tokens.size()) > max_tokens) {
        // Cut at the character position where the (max_tokens+1)-th token would start.
        int count = 0;
        size_t pos = 0;
        bool in_token = false;
        for (size_t i = 0; i < text.size(); ++i) {
            bool alnum = std::isalnum(static_cast<unsigned char>(text[i])) != 0;
            if (alnum && !in_token) {
                ++count;
                if (count > max_tokens) { pos = i; break; }
            }
            in_token = alnum;
            pos = text.size();
        }
        text = trim(text.substr(0, pos));
    }
    std::string entry = "[" + std::to_string(index_1based) + "] ";
    if (!doc.title.empty()) entry += doc.title + ". ";
    entry += text;
    return entry;
}

WindowRanking rank_window(const Question& q, const Expansion& e,
                          const std::vector<Document>& window, const std::string& theta_d,
                          Backend& backend, const GenOptions& options) {
    if (window.empty()) throw Error("rank_window requires a non-empty window");

    ContextFields context{{"q", q.text}, {"e", e.text}};
    for (size_t i = 0; i < window.size(); ++i)
        context.emplace_back("doc_" + std::to_string(i),
                             render_window_entry(window[i], static_cast<int>(i) + 1, 120));
    context.emplace_back("window_size", std::to_string(window.size()));

    RoleRequest request{RoleKind::rank_window, theta_d, std::move(context),
                        options.temperature, 1, options.seed};
    RoleResponse response = call_backend(backend, request);

    auto permutation = parse_ranking(response.samples.at(0), static_cast<int>(window.size()));
    if (!permutation) {
        RoleRequest retry = request;
        retry.seed = options.seed + 1;
        permutation = parse_ranking(call_backend(backend, retry).samples.at(0),
                                    static_cast<int>(window.size()));
    }

    WindowRanking out;
    if (!permutation) {
        out.docs = window;
        out.fallback = true;
        return out;
    }
    out.docs.reserve(window.size());
    for (int idx : *permutation) out.docs.push_back(window[static_cast<size_t>(idx - 1)]);
    return out;
}

std::string generate_answer(const Question& q, const std::vector<std::string>& evidence,
                            const std::string& theta_a, Backend& backend,
                            const GenOptions& options) {
    ContextFields context{{"q", q.text}};
    for (size_t i = 0; i < evidence.size(); ++i)
        context.emplace_back("evidence_" + std::to_string(i), evidence[i]);

    RoleRequest request{RoleKind::answer, theta_a, std::move(context),
                        options.temperature, 1, options.seed};
    std::string answer = trim(call_backend(backend, request).samples.at(0));
    if (answer.empty()) {
        RoleRequest retry = request;
        retry.seed = options.seed + 1;
        answer = trim(call_backend(backend, retry).samples.at(0));
    }
    if (answer.empty()) throw Error("answer stage produced an empty answer after retry");
    return answer;
}

namespace {

ScoredValue call_evaluator(RoleKind kind, const std::string& prompt, ContextFields context,
                           Backend& backend, const GenOptions& options) {
    RoleRequest request{kind, prompt, std::move(context), options.temperature, 1, options.seed};
    auto value = parse_first_number(call_backend(backend, request).samples.at(0));
    if (!value) {
        RoleRequest retry = request;
        retry.seed = options.seed + 1;
        value = parse_first_number(call_backend(backend, retry).samples.at(0));
    }
    if (!value) {
        warn("evaluator output unparseable after retry; scored 0.0");
        return {Score(0.0), true};
    }
    return {Score(*value), false};
}

}  // namespace

std::string render_documents(const std::vector<Document>& docs) {
    std::string out;
    for (size_t i = 0; i < docs.size(); ++i) {
        if (i) out += '\n';
        out += render_window_entry(docs[i], static_cast<int>(i) + 1, 120);
    }
    return out;
}

ScoredValue score_expansion(const Expansion& candidate, const Question& q, Backend& backend,
                            const std::string& prompt, const GenOptions& options) {
    return call_evaluator(RoleKind::score_expansion, prompt,
                          {{"q", q.text}, {"candidate", candidate.text}}, backend, options);
}

ScoredValue score_reranking(const std::vector<Document>& candidate_docs, const Question& q,
                            const Expansion& e, Backend& backend, const std::string& prompt,
                            const GenOptions& options) {
    return call_evaluator(RoleKind::score_reranking, prompt,
                          {{"q", q.text}, {"e", e.text}, {"docs", render_documents(candidate_docs)}},
                          backend, options);
}

ScoredValue score_answer(const GoldAnswers& gold, const Question& q, const Expansion& e,
                         const std::vector<Document>& docs, Backend& backend,
                         const std::string& prompt, const GenOptions& options) {
    std::string gold_joined;
    for (size_t i = 0; i < gold.answers.size(); ++i) {
        if (i) gold_joined += " | ";
        gold_joined += gold.answers[i];
    }
    return call_evaluator(RoleKind::score_answer, prompt,
                          {{"q", q.text},
                           {"e", e.text},
                           {"docs", render_documents(docs)},
                           {"gold", gold_joined}},
                          backend, options);
}

}  // namespace llmqa
