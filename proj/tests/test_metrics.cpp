#include <string>
#include <vector>

#include "doctest.h"
#include "llmqa/metrics.hpp"

using namespace llmqa;

namespace {

Document make_doc(const std::string& id, const std::string& text, int rank) {
    Document d;
    d.doc_id = id;
    d.text = text;
    d.rank = rank;
    return d;
}

Trace make_trace(const std::string& qid, const std::string& answer,
                 std::vector<Document> reranked) {
    Trace t;
    t.question_id = qid;
    t.answer = answer;
    t.chosen_expansion = Expansion("expansion for " + qid, 0);
    t.expansion_candidates = {{t.chosen_expansion, Score(1.0)}};
    t.retrieved = reranked;
    t.reranked = std::move(reranked);
    return t;
}

}  // namespace

TEST_CASE("normalize_answer lowercases, strips punctuation and articles") {
    CHECK(normalize_answer("The 1989 Grand National!") == "1989 grand national");
    CHECK(normalize_answer("An  Apple, a Day.") == "apple day");
    CHECK(normalize_answer("  spaced   out  ") == "spaced out");
    CHECK(normalize_answer("A The An") == "");
    CHECK(normalize_answer("") == "");
    CHECK(normalize_answer("theater remains") == "theater remains");  // not the article
}

TEST_CASE("exact_match accepts any gold answer after normalization") {
    GoldAnswers gold({"1989"});
    CHECK(exact_match("1989", gold) == 1);
    CHECK(exact_match("The 1989.", gold) == 1);
    CHECK(exact_match("1951", gold) == 0);

    GoldAnswers multi({"Little Polveir", "1989"});
    CHECK(exact_match("little polveir!", multi) == 1);
    CHECK(exact_match("1989", multi) == 1);
    CHECK(exact_match("red rum", multi) == 0);
}

TEST_CASE("answer_hit finds gold text inside the document concatenation") {
    std::vector<Document> docs{
        make_doc("d1", "Little Polveir won the 1989 Grand National steeplechase.", 0),
        make_doc("d2", "Unrelated text about rivers.", 1)};
    CHECK(answer_hit(docs, GoldAnswers({"1989"})) == 1);
    CHECK(answer_hit(docs, GoldAnswers({"grand national"})) == 1);
    CHECK(answer_hit(docs, GoldAnswers({"1951"})) == 0);
    CHECK(answer_hit({}, GoldAnswers({"1989"})) == 0);

    // The hit may span a document boundary only through the joining space.
    std::vector<Document> split{make_doc("a", "little", 0), make_doc("b", "polveir", 1)};
    CHECK(answer_hit(split, GoldAnswers({"little polveir"})) == 1);
}

TEST_CASE("evaluate averages EM and per-k recall over the dataset") {
    std::vector<DatasetEntry> dataset{
        {Question("q1", "who won the race"), GoldAnswers({"1989"})},
        {Question("q2", "capital of france"), GoldAnswers({"paris"})}};
    std::vector<Trace> traces{
        make_trace("q1", "The 1989",
                   {make_doc("d1", "nothing here", 0), make_doc("d2", "won in 1989", 1)}),
        make_trace("q2", "london",
                   {make_doc("d3", "paris is the capital", 0),
                    make_doc("d4", "also nothing", 1)})};
    traces[0].windows_total = 4;
    traces[0].windows_fallback = 1;
    traces[1].windows_total = 4;
    traces[1].windows_fallback = 1;

    auto report = evaluate(traces, dataset, {1, 2}, 0);
    CHECK(report.em == doctest::Approx(0.5));
    CHECK(report.recall_at.at(1) == doctest::Approx(0.5));
    CHECK(report.recall_at.at(2) == doctest::Approx(1.0));
    CHECK(report.recall_at.at(1) <= report.recall_at.at(2));
    CHECK(report.fallback_rate == doctest::Approx(0.25));
    REQUIRE(report.per_example.size() == 2);
    CHECK(report.per_example[0].em_bit == 1);
    CHECK(report.per_example[1].em_bit == 0);
    CHECK(report.per_example[0].hit_bits.at(1) == 0);
    CHECK(report.per_example[0].hit_bits.at(2) == 1);
    // bootstrap_rounds = 0 falls back to the plain mean
    CHECK(report.em_bootstrap_mean == doctest::Approx(report.em));
}

TEST_CASE("recall is monotone in k by construction") {
    std::vector<DatasetEntry> dataset{{Question("q1", "q"), GoldAnswers({"needle"})}};
    std::vector<Document> docs;
    for (int i = 0; i < 8; ++i)
        docs.push_back(make_doc("d" + std::to_string(i), i == 5 ? "the needle" : "hay", i));
    auto report = evaluate({make_trace("q1", "x", docs)}, dataset, {1, 2, 4, 8}, 0);
    double prev = -1.0;
    for (int k : {1, 2, 4, 8}) {
        CHECK(report.recall_at.at(k) >= prev);
        prev = report.recall_at.at(k);
    }
    CHECK(report.recall_at.at(4) == doctest::Approx(0.0));
    CHECK(report.recall_at.at(8) == doctest::Approx(1.0));
}

TEST_CASE("bootstrap mean is seed-deterministic and exact on constant bits") {
    std::vector<DatasetEntry> dataset{
        {Question("q1", "q one"), GoldAnswers({"yes"})},
        {Question("q2", "q two"), GoldAnswers({"no"})}};
    std::vector<Trace> traces{make_trace("q1", "yes", {make_doc("d1", "yes", 0)}),
                              make_trace("q2", "maybe", {make_doc("d2", "no", 0)})};

    auto a = evaluate(traces, dataset, {1}, 20, 123);
    auto b = evaluate(traces, dataset, {1}, 20, 123);
    auto c = evaluate(traces, dataset, {1}, 20, 456);
    CHECK(a.em_bootstrap_mean == b.em_bootstrap_mean);
    CHECK(a.em_bootstrap_rounds == 20);
    // resampling constant bits gives the constant back
    std::vector<Trace> all_right{make_trace("q1", "yes", {make_doc("d1", "yes", 0)}),
                                 make_trace("q2", "no", {make_doc("d2", "no", 0)})};
    auto exact = evaluate(all_right, dataset, {1}, 50, 7);
    CHECK(exact.em_bootstrap_mean == doctest::Approx(1.0));
    (void)c;
}

TEST_CASE("include_expansion counts the chosen expansion as evidence") {
    std::vector<DatasetEntry> dataset{{Question("q1", "q"), GoldAnswers({"zanzibar"})}};
    auto trace = make_trace("q1", "x", {make_doc("d1", "no match", 0)});
    trace.chosen_expansion = Expansion("facts about zanzibar", 0);
    trace.expansion_candidates = {{trace.chosen_expansion, Score(1.0)}};

    auto without = evaluate({trace}, dataset, {1}, 0, 0, false);
    auto with = evaluate({trace}, dataset, {1}, 0, 0, true);
    CHECK(without.recall_at.at(1) == doctest::Approx(0.0));
    CHECK(with.recall_at.at(1) == doctest::Approx(1.0));
}

TEST_CASE("evaluate rejects traces with unknown question ids") {
    std::vector<DatasetEntry> dataset{{Question("q1", "q"), GoldAnswers({"x"})}};
    auto trace = make_trace("q9", "x", {make_doc("d1", "x", 0)});
    CHECK_THROWS_WITH_AS(evaluate({trace}, dataset, {1}, 0),
                         "trace references unknown question id: q9", Error);
    CHECK_THROWS_AS(evaluate({}, dataset, {1}, 0), Error);
}

TEST_CASE("render_report includes every requested metric line") {
    std::vector<DatasetEntry> dataset{{Question("q1", "q"), GoldAnswers({"x"})}};
    auto report = evaluate({make_trace("q1", "x", {make_doc("d1", "x", 0)})}, dataset, {1, 5}, 3);
    auto text = render_report(report, {1, 5});
    CHECK(text.find("EM") != std::string::npos);
    CHECK(text.find("Recall@1") != std::string::npos);
    CHECK(text.find("Recall@5") != std::string::npos);
    CHECK(text.find("fallback") != std::string::npos);
}
