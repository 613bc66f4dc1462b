#include <doctest.h>

#include <random>

#include "llmqa/core.hpp"

using namespace llmqa;

namespace {

Trace make_valid_trace() {
    Trace trace;
    trace.question_id = "q1";
    Expansion e("background text", 0);
    trace.expansion_candidates = {{e, Score(0.9)}};
    trace.chosen_expansion = e;
    trace.retrieved = {{"d1", "", "alpha", 2.0, 0}, {"d2", "", "beta", 1.0, 1}};
    trace.reranked = {{"d1", "", "alpha", 2.0, 0}};
    trace.answer = "alpha";
    return trace;
}

}  // namespace

TEST_CASE("question requires non-blank text") {
    CHECK_THROWS_AS(Question("q1", "   \n"), Error);
    CHECK_NOTHROW(Question("q1", " ok "));
}

TEST_CASE("gold answers reject empty entries") {
    CHECK_THROWS_AS(GoldAnswers(std::vector<std::string>{}), Error);
    CHECK_THROWS_AS(GoldAnswers({"1989", ""}), Error);
}

TEST_CASE("score clamps into [0,1] and clamping is idempotent") {
    CHECK(Score(1.7).value() == 1.0);
    CHECK(Score(-0.3).value() == 0.0);
    CHECK(Score(0.85).value() == doctest::Approx(0.85));
    CHECK(Score(std::nan("")).value() == 0.0);

    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (int i = 0; i < 200; ++i) {
        double v = dist(rng);
        Score once(v);
        Score twice(once.value());
        CHECK(once.value() == twice.value());
        CHECK(once.value() >= 0.0);
        CHECK(once.value() <= 1.0);
    }
}

TEST_CASE("prompt set version strictly increases on update") {
    PromptSet p("e", "d", "a", 3);
    PromptSet q = p.with_prompts("e2", "d2", "a2");
    CHECK(q.version == 4);
    CHECK(p.version == 3);
    CHECK_THROWS_AS(PromptSet("", "d", "a"), Error);
}

TEST_CASE("validate_trace accepts a well-formed trace") {
    CHECK(validate_trace(make_valid_trace()));
}

TEST_CASE("validate_trace rejects reranked docs outside retrieved") {
    Trace trace = make_valid_trace();
    trace.reranked.push_back({"dX", "", "ghost", 0.5, 1});
    CHECK_FALSE(validate_trace(trace));
}

TEST_CASE("validate_trace rejects empty answer") {
    Trace trace = make_valid_trace();
    trace.answer = "";
    CHECK_FALSE(validate_trace(trace));
}

TEST_CASE("validate_trace rejects chosen expansion not among candidates") {
    Trace trace = make_valid_trace();
    trace.chosen_expansion = Expansion("something else", 0);
    CHECK_FALSE(validate_trace(trace));
}

TEST_CASE("validate_trace rejects duplicate ranks") {
    Trace trace = make_valid_trace();
    trace.retrieved[1].rank = 0;
    CHECK_FALSE(validate_trace(trace));
}
