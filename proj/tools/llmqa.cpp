// llmqa command line: build indexes, run inference, train prompts, evaluate,
// and compare reranking strategies.

#include <CLI11.hpp>

#include "llmqa/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Open-domain QA pipeline with sliding-window reranking and prompt training"};
    app.require_subcommand(1);

    llmqa::IndexArgs index_args;
    auto* index = app.add_subcommand("index", "Build a corpus index from a JSON-lines file");
    index->add_option("--corpus", index_args.corpus_path, "Corpus JSONL (id/title/text)")
        ->required();
    index->add_option("--out", index_args.out_path, "Output index path")->required();
    index->add_flag("--stopwords", index_args.remove_stopwords, "Drop common stopwords");
    index->add_flag("--stem", index_args.stem, "Apply light suffix stemming");

    llmqa::RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run the inference pipeline over a dataset");
    run->add_option("--dataset", run_args.dataset_path, "Dataset JSONL")->required();
    run->add_option("--index", run_args.index_path, "Corpus index path")->required();
    run->add_option("--prompts", run_args.prompts_path, "Prompt store JSON")->required();
    run->add_option("--config", run_args.config_path, "Run config JSON")->required();
    run->add_option("--out", run_args.out_path, "Output traces JSONL")->required();
    run->add_option("--seed", run_args.seed_override, "Seed override");
    run->add_option("--workers", run_args.workers_override, "Worker count override");
    run->add_flag("--deterministic-compare", run_args.deterministic_compare,
                  "Exclude timing from trace output");

    llmqa::TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Optimize prompts over a training dataset");
    train->add_option("--dataset", train_args.dataset_path, "Dataset JSONL")->required();
    train->add_option("--index", train_args.index_path, "Corpus index path")->required();
    train->add_option("--prompts", train_args.prompts_path, "Initial prompt store")->required();
    train->add_option("--config", train_args.config_path, "Run config JSON")->required();
    train->add_option("--out-dir", train_args.out_dir, "Checkpoint/log directory")->required();
    train->add_flag("--resume", train_args.resume, "Resume from the last checkpoint");
    train->add_option("--seed", train_args.seed_override, "Seed override");

    llmqa::EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score traces against a dataset");
    eval->add_option("--traces", eval_args.traces_path, "Traces JSONL")->required();
    eval->add_option("--dataset", eval_args.dataset_path, "Dataset JSONL")->required();
    eval->add_option("--ks", eval_args.ks, "Recall prefix sizes");
    eval->add_option("--bootstrap-rounds", eval_args.bootstrap_rounds, "Bootstrap rounds");
    eval->add_option("--seed", eval_args.seed, "Bootstrap seed");
    eval->add_option("--report-out", eval_args.report_out, "Write the report JSON here");
    eval->add_flag("--include-expansion", eval_args.include_expansion,
                   "Count the chosen expansion as evidence for recall");

    llmqa::CompareArgs compare_args;
    auto* compare =
        app.add_subcommand("compare-rerank", "Compare sliding / score-order / random reranking");
    compare->add_option("--dataset", compare_args.dataset_path, "Dataset JSONL")->required();
    compare->add_option("--index", compare_args.index_path, "Corpus index path")->required();
    compare->add_option("--prompts", compare_args.prompts_path, "Prompt store JSON")->required();
    compare->add_option("--config", compare_args.config_path, "Run config JSON")->required();
    compare->add_flag("--oracle-ranker", compare_args.oracle_ranker,
                      "Order windows by gold-answer containment");
    compare->add_option("--seed", compare_args.seed_override, "Seed override");
    compare->add_option("--ks", compare_args.ks, "Recall prefix sizes");

    CLI11_PARSE(app, argc, argv);

    if (*index) return llmqa::cmd_index(index_args);
    if (*run) return llmqa::cmd_run(run_args);
    if (*train) return llmqa::cmd_train(train_args);
    if (*eval) return llmqa::cmd_eval(eval_args);
    if (*compare) return llmqa::cmd_compare_rerank(compare_args);
    return 1;
}
