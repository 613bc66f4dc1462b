#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "llmqa/roles.hpp"

using namespace llmqa;
namespace fs = std::filesystem;

TEST_CASE("mock backend is a pure function of request and seed") {
    MockBackend mock(7);
    RoleRequest request{RoleKind::expand, "expand it", {{"q", "who won?"}}, 0.7, 3, 11};
    auto a = mock.call(request);
    auto b = mock.call(request);
    CHECK(a.samples == b.samples);
    REQUIRE(a.samples.size() == 3);
    CHECK(a.samples[0] != a.samples[1]);
    CHECK(a.samples[1] != a.samples[2]);

    request.seed = 12;
    CHECK(mock.call(request).samples != a.samples);
}

TEST_CASE("generate_expansions returns m deterministic candidates") {
    MockBackend mock(7);
    Question q("q1", "who won the grand national in 1989?");
    auto first = generate_expansions(q, "expand the query", 3, mock, {0.7, 7});
    auto second = generate_expansions(q, "expand the query", 3, mock, {0.7, 7});
    REQUIRE(first.size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK(first[i].text == second[i].text);

    auto one = generate_expansions(q, "expand the query", 1, mock);
    CHECK(one.size() == 1);
}

TEST_CASE("scripted backend returns canned expansions in script order") {
    ScriptedBackend scripted;
    std::vector<std::string> canned;
    for (int i = 0; i < 10; ++i) canned.push_back("expansion number " + std::to_string(i));
    scripted.push(RoleKind::expand, canned);

    Question q("q1", "test question");
    auto expansions = generate_expansions(q, "p", 10, scripted);
    REQUIRE(expansions.size() == 10);
    for (int i = 0; i < 10; ++i)
        CHECK(expansions[static_cast<size_t>(i)].text == canned[static_cast<size_t>(i)]);
}

TEST_CASE("parse_ranking handles well-formed, prose-wrapped, and malformed output") {
    CHECK(parse_ranking("[3] > [1] > [2]", 3) == std::vector<int>{3, 1, 2});
    CHECK(parse_ranking("The ranking is: [2] > [1], done.", 2) == std::vector<int>{2, 1});
    CHECK_FALSE(parse_ranking("3,1", 2).has_value());
    CHECK_FALSE(parse_ranking("[1] > [1] > [2]", 3).has_value());
    CHECK_FALSE(parse_ranking("[1] > [4] > [2]", 3).has_value());
    CHECK_FALSE(parse_ranking("[1] > [2]", 3).has_value());
}

namespace {

std::vector<Document> window3() {
    return {{"dA", "", "alpha text", 3.0, 0},
            {"dB", "", "beta text", 2.0, 1},
            {"dC", "", "gamma text", 1.0, 2}};
}

}  // namespace

TEST_CASE("rank_window applies the permutation from the backend") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::rank_window, {"[3] > [1] > [2]"});
    auto ranking = rank_window(Question("q1", "q?"), Expansion("e", 0), window3(), "rank", scripted);
    CHECK_FALSE(ranking.fallback);
    REQUIRE(ranking.docs.size() == 3);
    CHECK(ranking.docs[0].doc_id == "dC");
    CHECK(ranking.docs[1].doc_id == "dA");
    CHECK(ranking.docs[2].doc_id == "dB");
}

TEST_CASE("rank_window falls back to input order on malformed output") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::rank_window, {"3,1"});
    scripted.push(RoleKind::rank_window, {"still not a ranking"});  // the retry
    auto ranking = rank_window(Question("q1", "q?"), Expansion("e", 0), window3(), "rank", scripted);
    CHECK(ranking.fallback);
    CHECK(ranking.docs[0].doc_id == "dA");
    CHECK(ranking.docs[1].doc_id == "dB");
    CHECK(ranking.docs[2].doc_id == "dC");
}

TEST_CASE("rank_window rejects duplicate indices as non-permutations") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::rank_window, {"[1] > [1] > [2]"});
    scripted.push(RoleKind::rank_window, {"[2] > [2] > [1]"});
    auto ranking = rank_window(Question("q1", "q?"), Expansion("e", 0), window3(), "rank", scripted);
    CHECK(ranking.fallback);
    CHECK(ranking.docs[0].doc_id == "dA");
}

TEST_CASE("generate_answer returns the trimmed first sample") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::answer, {"  1989\n"});
    auto answer = generate_answer(Question("q1", "when?"), {"evidence"}, "answer", scripted);
    CHECK(answer == "1989");
}

TEST_CASE("generate_answer works closed-book with canned mock answers") {
    MockBackend mock;
    mock.set_canned_answer("when did little polveir win the grand national", "1989");
    auto answer = generate_answer(
        Question("q1", "when did little polveir win the grand national"), {}, "answer", mock);
    CHECK(answer == "1989");
}

TEST_CASE("generate_answer errors when the answer stays empty after retry") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::answer, {"   "});
    scripted.push(RoleKind::answer, {""});
    CHECK_THROWS_AS(generate_answer(Question("q1", "when?"), {}, "answer", scripted), Error);
}

TEST_CASE("score_expansion parses and clamps evaluator output") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::score_expansion, {"0.85"});
    scripted.push(RoleKind::score_expansion, {"1.7"});
    Question q("q1", "q?");
    Expansion e("candidate", 0);
    CHECK(score_expansion(e, q, scripted).score.value() == doctest::Approx(0.85));
    CHECK(score_expansion(e, q, scripted).score.value() == 1.0);
}

TEST_CASE("unparseable evaluator output scores 0.0 with a warning flag") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::score_expansion, {"great!"});
    scripted.push(RoleKind::score_expansion, {"great!"});
    auto result = score_expansion(Expansion("c", 0), Question("q1", "q?"), scripted);
    CHECK(result.score.value() == 0.0);
    CHECK(result.parse_warning);
}

TEST_CASE("score_reranking and score_answer pass scripted values through") {
    ScriptedBackend scripted;
    scripted.push(RoleKind::score_reranking, {"0.4"});
    scripted.push(RoleKind::score_answer, {"0.8"});
    Question q("q1", "q?");
    Expansion e("e", 0);
    std::vector<Document> docs = window3();
    CHECK(score_reranking(docs, q, e, scripted).score.value() == doctest::Approx(0.4));
    CHECK(score_answer(GoldAnswers({"1989"}), q, e, docs, scripted).score.value() ==
          doctest::Approx(0.8));
}

TEST_CASE("cache hit returns stored samples byte-for-byte") {
    auto dir = fs::temp_directory_path() / "llmqa_cache_test";
    fs::remove_all(dir);
    MockBackend mock(3);
    RoleRequest request{RoleKind::expand, "p", {{"q", "question"}}, 0.7, 2, 5};

    auto first = call_with_cache(request, mock, dir.string());
    CHECK_FALSE(first.cached);
    auto second = call_with_cache(request, mock, dir.string());
    CHECK(second.cached);
    CHECK(first.samples == second.samples);

    RoleRequest other_seed = request;
    other_seed.seed = 6;
    CHECK_FALSE(call_with_cache(other_seed, mock, dir.string()).cached);

    RoleRequest other_prompt = request;
    other_prompt.prompt = "different prompt";
    CHECK_FALSE(call_with_cache(other_prompt, mock, dir.string()).cached);
    fs::remove_all(dir);
}

TEST_CASE("caching backend decorator exposes the same behavior") {
    auto dir = fs::temp_directory_path() / "llmqa_cache_test2";
    fs::remove_all(dir);
    CachingBackend cached(std::make_shared<MockBackend>(1), dir.string());
    RoleRequest request{RoleKind::score_answer, "p", {{"q", "x"}}, 0.0, 1, 0};
    auto a = cached.call(request);
    auto b = cached.call(request);
    CHECK_FALSE(a.cached);
    CHECK(b.cached);
    CHECK(a.samples == b.samples);
    fs::remove_all(dir);
}

TEST_CASE("scripted backend loads exact-match tables from file") {
    auto path = fs::temp_directory_path() / "llmqa_scripted.jsonl";
    ContextFields context{{"q", "who?"}, {"candidate", "an expansion"}};
    {
        std::ofstream out(path);
        out << R"({"match":{"role_kind":"score_expansion","context_digest":")"
            << context_digest(context) << R"("},"samples":["0.4"]})" << "\n";
    }
    auto backend = ScriptedBackend::load(path.string());
    RoleRequest request{RoleKind::score_expansion, "any prompt", context, 0.0, 1, 0};
    CHECK(backend->call(request).samples == std::vector<std::string>{"0.4"});
    fs::remove(path);
}

TEST_CASE("role responses carry the backend id") {
    MockBackend mock;
    RoleRequest request{RoleKind::answer, "p", {{"q", "x"}}, 0.0, 1, 0};
    CHECK(mock.call(request).backend_id == "mock");
}
