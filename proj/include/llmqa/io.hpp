#pragma once
// File formats: JSON-lines corpora, datasets, traces, training logs, and the
// versioned prompt store. All files are UTF-8.

#include <string>
#include <vector>

#include <json.hpp>

#include "llmqa/core.hpp"
#include "llmqa/metrics.hpp"
#include "llmqa/prompt_opt.hpp"
#include "llmqa/retrieval.hpp"

namespace llmqa {

// Corpus: one {"id", "title", "text"} object per line.
std::vector<CorpusRecord> load_corpus(const std::string& path);

// Dataset: one {"id", "question", "answers": [string]} object per line.
std::vector<DatasetEntry> load_dataset(const std::string& path);

void save_index(const CorpusIndex& index, const std::string& path);
CorpusIndex load_index(const std::string& path);

// include_timing=false zeroes per-stage durations (deterministic compare).
nlohmann::json trace_to_json(const Trace& trace, bool include_timing = true);
Trace trace_from_json(const nlohmann::json& obj);

void save_traces(const std::vector<Trace>& traces, const std::string& path,
                 bool include_timing = true);
std::vector<Trace> load_traces(const std::string& path);

// Prompt store: {"version", "theta_e", "theta_d", "theta_a", "history"}.
struct PromptHistoryEntry {
    int version = 0;
    std::string step_report_ref;
};

struct PromptStore {
    PromptSet prompts;
    std::vector<PromptHistoryEntry> history;
};

void save_prompt_store(const PromptStore& store, const std::string& path);
PromptStore load_prompt_store(const std::string& path);

nlohmann::json step_report_to_json(const StepReport& report);

nlohmann::json eval_report_to_json(const EvalReport& report);

// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace llmqa
