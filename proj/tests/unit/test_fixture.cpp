#include "helpers.hpp"

#include "rrcycle/fixture.hpp"

using namespace rrcycle;

TEST_SUITE("fixture") {
  TEST_CASE("task layout") {
    fixture::TaskConfig c;
    const auto t = fixture::build_task(c, 1);
    CHECK(t.vocab.size() == 1 + c.marker_tokens + c.content_tokens);
    CHECK(t.vocab.terminator() == TokenId{0});
    CHECK(t.markers == std::vector<TokenId>{1, 2});
    CHECK(t.weights.markers == t.markers);
    CHECK(t.prompts.size() == c.prompt_count);
    CHECK(t.eval_prompts.size() == c.eval_prompt_count);
    for (const auto& p : t.prompts) {
      CHECK(p.size() == c.prompt_length);
      for (TokenId id : p) CHECK(id >= 3);
    }
    CHECK_FALSE(t.teacher == t.gold);
  }

  TEST_CASE("gold model and prompts ignore the run seed; the teacher does not") {
    fixture::TaskConfig c;
    const auto a = fixture::build_task(c, 1), b = fixture::build_task(c, 2);
    CHECK(a.gold == b.gold);
    CHECK(a.prompts == b.prompts);
    CHECK_FALSE(a.teacher == b.teacher);
  }

  TEST_CASE("sft corpus is deterministic") {
    fixture::TaskConfig c;
    const auto t = fixture::build_task(c, 1);
    const auto a = fixture::sft_corpus(t, c, 5);
    CHECK(a.size() == c.sft_examples);
    CHECK(a == fixture::sft_corpus(t, c, 5));
    CHECK_FALSE(a == fixture::sft_corpus(t, c, 6));
  }

  TEST_CASE("task config json") {
    fixture::TaskConfig c;
    c.teacher_noise = 0.25;
    c.weights.marker_bonus = 2.0;
    const auto back = fixture::task_config_from_json(fixture::to_json(c));
    CHECK(back.teacher_noise == 0.25);
    CHECK(back.weights.marker_bonus == 2.0);
    CHECK(testing::error_code_of([] { fixture::task_config_from_json({{"prompt_count", 0}}); }) ==
          ErrorCode::InvalidArgument);
    CHECK(testing::error_code_of([] { fixture::task_config_from_json({{"order", "two"}}); }) ==
          ErrorCode::SchemaViolation);
  }
}
