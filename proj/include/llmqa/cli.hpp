#pragma once
// Operator surface: configuration loading, backend construction, and the
// subcommand implementations behind the llmqa binary.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmqa/metrics.hpp"
#include "llmqa/pipeline.hpp"
#include "llmqa/prompt_opt.hpp"

namespace llmqa {

struct RunConfig {
    RetrievalConfig retrieval;
    PipelineConfig pipeline;
    TrainConfig train;
    nlohmann::json backends;  // role bindings; "default" plus per-role overrides
    std::string cache_dir;
    long seed = 0;
    int workers = 1;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& obj);

// Builds one backend per role from the config bindings; wraps each in a
// caching decorator when cache_dir is set.
RoleBackends make_backends(const RunConfig& config);

struct IndexArgs {
    std::string corpus_path;
    std::string out_path;
    bool remove_stopwords = false;
    bool stem = false;
};
int cmd_index(const IndexArgs& args);

struct RunArgs {
    std::string dataset_path;
    std::string index_path;
    std::string prompts_path;
    std::string config_path;
    std::string out_path;
    long seed_override = -1;
    int workers_override = 0;
    bool deterministic_compare = false;  // exclude timing from trace output
};
int cmd_run(const RunArgs& args);

struct TrainArgs {
    std::string dataset_path;
    std::string index_path;
    std::string prompts_path;
    std::string config_path;
    std::string out_dir;
    bool resume = false;
    long seed_override = -1;
};
int cmd_train(const TrainArgs& args);

struct EvalArgs {
    std::string traces_path;
    std::string dataset_path;
    std::vector<int> ks = {2, 4, 8};
    int bootstrap_rounds = 10;
    long seed = 0;
    std::string report_out;  // optional JSON output path
    bool include_expansion = false;
};
int cmd_eval(const EvalArgs& args);

enum class RerankStrategy { sliding, retrieval_score, random_order };

std::string rerank_strategy_name(RerankStrategy strategy);

struct CompareArgs {
    std::string dataset_path;
    std::string index_path;
    std::string prompts_path;
    std::string config_path;
    bool oracle_ranker = false;  // rank windows by gold-answer containment
    long seed_override = -1;
    std::vector<int> ks = {2, 4, 8};
};

// Per-strategy evaluation reports, exposed for tests; cmd_compare_rerank
// prints them as a table.
std::map<std::string, EvalReport> compare_rerank_strategies(const CompareArgs& args);
int cmd_compare_rerank(const CompareArgs& args);

}  // namespace llmqa
