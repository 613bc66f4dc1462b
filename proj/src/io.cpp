#include "llmqa/io.hpp"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace llmqa {

namespace {

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    std::vector<json> objects;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            objects.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(path + ": parse error at line " + std::to_string(line_no) + ": " +
                        e.what());
        }
    }
    return objects;
}

json document_to_json(const Document& d) {
    return {{"doc_id", d.doc_id},
            {"title", d.title},
            {"text", d.text},
            {"retrieval_score", d.retrieval_score},
            {"rank", d.rank}};
}

Document document_from_json(const json& obj) {
    return Document{obj.at("doc_id").get<std::string>(),
                    obj.value("title", std::string{}),
                    obj.at("text").get<std::string>(),
                    obj.value("retrieval_score", 0.0),
                    obj.value("rank", 0)};
}

json documents_to_json(const std::vector<Document>& docs) {
    json arr = json::array();
    for (const auto& d : docs) arr.push_back(document_to_json(d));
    return arr;
}

std::vector<Document> documents_from_json(const json& arr) {
    std::vector<Document> docs;
    for (const auto& obj : arr) docs.push_back(document_from_json(obj));
    return docs;
}

json expansion_to_json(const Expansion& e) {
    return {{"text", e.text}, {"source_prompt_version", e.source_prompt_version}};
}

Expansion expansion_from_json(const json& obj) {
    Expansion e;
    e.text = obj.at("text").get<std::string>();
    e.source_prompt_version = obj.value("source_prompt_version", 0);
    return e;
}

}  // namespace

std::vector<CorpusRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file: " + path);
    std::vector<CorpusRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            json obj = json::parse(line);
            records.push_back(CorpusRecord{obj.at("id").get<std::string>(),
                                           obj.value("title", std::string{}),
                                           obj.at("text").get<std::string>()});
        } catch (const json::exception& e) {
            throw Error(path + ": parse error at line " + std::to_string(line_no) + ": " +
                        e.what());
        }
    }
    if (records.empty()) throw Error("corpus file is empty: " + path);
    return records;
}

std::vector<DatasetEntry> load_dataset(const std::string& path) {
    std::vector<DatasetEntry> entries;
    for (const auto& obj : read_jsonl(path)) {
        entries.push_back(DatasetEntry{
            Question(obj.at("id").get<std::string>(), obj.at("question").get<std::string>()),
            GoldAnswers(obj.at("answers").get<std::vector<std::string>>())});
    }
    if (entries.empty()) throw Error("dataset file is empty: " + path);
    return entries;
}

void save_index(const CorpusIndex& index, const std::string& path) {
    json postings = json::object();
    for (const auto& [term, list] : index.postings) {
        json arr = json::array();
        for (const auto& p : list) arr.push_back({{"doc_id", p.doc_id}, {"tf", p.term_frequency}});
        postings[term] = std::move(arr);
    }
    json docs = json::array();
    for (const auto& [id, doc] : index.doc_store) docs.push_back(document_to_json(doc));
    json obj = {{"schema", 1},
                {"doc_count", index.doc_count},
                {"avg_doc_length", index.avg_doc_length},
                {"remove_stopwords", index.remove_stopwords},
                {"stem", index.stem},
                {"doc_lengths", index.doc_lengths},
                {"postings", std::move(postings)},
                {"documents", std::move(docs)}};
    write_file_atomic(path, obj.dump());
}

CorpusIndex load_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open index file: " + path);
    json obj;
    try {
        obj = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path + ": index parse error: " + e.what());
    }
    CorpusIndex index;
    index.doc_count = obj.at("doc_count").get<long>();
    index.avg_doc_length = obj.at("avg_doc_length").get<double>();
    index.remove_stopwords = obj.value("remove_stopwords", false);
    index.stem = obj.value("stem", false);
    index.doc_lengths =
        obj.at("doc_lengths").get<std::unordered_map<std::string, int>>();
    for (const auto& [term, arr] : obj.at("postings").items()) {
        std::vector<Posting> list;
        for (const auto& p : arr)
            list.push_back({p.at("doc_id").get<std::string>(), p.at("tf").get<int>()});
        index.postings[term] = std::move(list);
    }
    for (const auto& d : obj.at("documents")) {
        Document doc = document_from_json(d);
        index.doc_store[doc.doc_id] = std::move(doc);
    }
    return index;
}

json trace_to_json(const Trace& trace, bool include_timing) {
    json expansion_candidates = json::array();
    for (const auto& [e, s] : trace.expansion_candidates)
        expansion_candidates.push_back(
            {{"expansion", expansion_to_json(e)}, {"score", s.value()}});
    json rerank_candidates = json::array();
    for (const auto& [docs, s] : trace.rerank_candidates)
        rerank_candidates.push_back({{"docs", documents_to_json(docs)}, {"score", s.value()}});
    json timing = json::object();
    if (include_timing)
        for (const auto& [stage, ms] : trace.timing_ms) timing[stage] = ms;

    return {{"question_id", trace.question_id},
            {"expansion_candidates", std::move(expansion_candidates)},
            {"chosen_expansion", expansion_to_json(trace.chosen_expansion)},
            {"retrieved", documents_to_json(trace.retrieved)},
            {"reranked", documents_to_json(trace.reranked)},
            {"rerank_candidates", std::move(rerank_candidates)},
            {"answer", trace.answer},
            {"prompt_version", trace.prompt_version},
            {"timing_ms", std::move(timing)},
            {"windows_total", trace.windows_total},
            {"windows_fallback", trace.windows_fallback},
            {"empty_retrieval_warning", trace.empty_retrieval_warning}};
}

Trace trace_from_json(const json& obj) {
    Trace trace;
    trace.question_id = obj.at("question_id").get<std::string>();
    for (const auto& entry : obj.at("expansion_candidates"))
        trace.expansion_candidates.emplace_back(expansion_from_json(entry.at("expansion")),
                                                Score(entry.at("score").get<double>()));
    trace.chosen_expansion = expansion_from_json(obj.at("chosen_expansion"));
    trace.retrieved = documents_from_json(obj.at("retrieved"));
    trace.reranked = documents_from_json(obj.at("reranked"));
    for (const auto& entry : obj.at("rerank_candidates"))
        trace.rerank_candidates.emplace_back(documents_from_json(entry.at("docs")),
                                             Score(entry.at("score").get<double>()));
    trace.answer = obj.at("answer").get<std::string>();
    trace.prompt_version = obj.at("prompt_version").get<int>();
    for (const auto& [stage, ms] : obj.at("timing_ms").items())
        trace.timing_ms[stage] = ms.get<double>();
    trace.windows_total = obj.value("windows_total", 0);
    trace.windows_fallback = obj.value("windows_fallback", 0);
    trace.empty_retrieval_warning = obj.value("empty_retrieval_warning", false);
    return trace;
}

void save_traces(const std::vector<Trace>& traces, const std::string& path,
                 bool include_timing) {
    std::string out;
    for (const auto& trace : traces) {
        out += trace_to_json(trace, include_timing).dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<Trace> load_traces(const std::string& path) {
    std::vector<Trace> traces;
    for (const auto& obj : read_jsonl(path)) traces.push_back(trace_from_json(obj));
    return traces;
}

void save_prompt_store(const PromptStore& store, const std::string& path) {
    json history = json::array();
    for (const auto& entry : store.history)
        history.push_back(
            {{"version", entry.version}, {"step_report_ref", entry.step_report_ref}});
    json obj = {{"version", store.prompts.version},
                {"theta_e", store.prompts.theta_e},
                {"theta_d", store.prompts.theta_d},
                {"theta_a", store.prompts.theta_a},
                {"history", std::move(history)}};
    write_file_atomic(path, obj.dump(2));
}

PromptStore load_prompt_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open prompt store: " + path);
    json obj;
    try {
        obj = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path + ": prompt store parse error: " + e.what());
    }
    PromptStore store;
    store.prompts = PromptSet(obj.at("theta_e").get<std::string>(),
                              obj.at("theta_d").get<std::string>(),
                              obj.at("theta_a").get<std::string>(),
                              obj.at("version").get<int>());
    for (const auto& entry : obj.value("history", json::array()))
        store.history.push_back({entry.at("version").get<int>(),
                                 entry.value("step_report_ref", std::string{})});
    return store;
}

namespace {

json prompt_update_to_json(const PromptUpdateReport& update) {
    return {{"candidates", update.candidates},
            {"objectives", update.objectives},
            {"selected_index", update.selected_index},
            {"incumbent_index", update.incumbent_index}};
}

}  // namespace

json step_report_to_json(const StepReport& report) {
    json doc_candidates = json::array();
    for (const auto& c : report.doc_candidates)
        doc_candidates.push_back({{"swapped_in_rank", c.swapped_in_rank},
                                  {"doc_ids", [&] {
                                       json ids = json::array();
                                       for (const auto& d : c.docs) ids.push_back(d.doc_id);
                                       return ids;
                                   }()},
                                  {"s_d", c.s_d.value()},
                                  {"s_a", c.s_a.value()},
                                  {"v_d", c.v_d}});
    json expansion_candidates = json::array();
    for (const auto& c : report.expansion_candidates)
        expansion_candidates.push_back({{"expansion", c.expansion.text},
                                        {"s_e", c.s_e.value()},
                                        {"s_d", c.s_d.value()},
                                        {"s_a", c.s_a.value()},
                                        {"v_e", c.v_e}});
    return {{"schema_version", report.schema_version},
            {"question_id", report.question_id},
            {"skipped", report.skipped},
            {"skip_reason", report.skip_reason},
            {"prior_expansion", report.prior_expansion},
            {"prior_answer", report.prior_answer},
            {"doc_candidates", std::move(doc_candidates)},
            {"best_doc_index", report.best_doc_index},
            {"expansion_candidates", std::move(expansion_candidates)},
            {"best_expansion_index", report.best_expansion_index},
            {"answer_update", prompt_update_to_json(report.answer_update)},
            {"rerank_update", prompt_update_to_json(report.rerank_update)},
            {"expand_update", prompt_update_to_json(report.expand_update)},
            {"version_before", report.version_before},
            {"version_after", report.version_after}};
}

json eval_report_to_json(const EvalReport& report) {
    json recall = json::object();
    for (const auto& [k, v] : report.recall_at) recall[std::to_string(k)] = v;
    json per_example = json::array();
    for (const auto& ex : report.per_example) {
        json hits = json::object();
        for (const auto& [k, bit] : ex.hit_bits) hits[std::to_string(k)] = bit;
        per_example.push_back({{"question_id", ex.question_id},
                               {"em", ex.em_bit},
                               {"hits", std::move(hits)}});
    }
    return {{"em", report.em},
            {"em_bootstrap_mean", report.em_bootstrap_mean},
            {"em_bootstrap_rounds", report.em_bootstrap_rounds},
            {"recall_at", std::move(recall)},
            {"fallback_rate", report.fallback_rate},
            {"per_example", std::move(per_example)}};
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write file: " + tmp.string());
        out << contents;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

}  // namespace llmqa
