#include "helpers.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "gradcheck.hpp"
#include "rrcycle/fixture.hpp"
#include "rrcycle/policy.hpp"
#include "rrcycle/rng.hpp"

using namespace rrcycle;
using namespace rrcycle::policy;

namespace {

// A model whose every conditional puts probability 1 on token (state % V).
PolicyParams deterministic_model(std::size_t V, int order) {
  PolicyParams p(Vocabulary::numbered(V), order);
  for (std::size_t s = 0; s < p.num_states(); ++s) p.row(s)[s % V] = 1000.0;
  return p;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t V, std::size_t max_len, std::size_t min_len = 0) {
  std::vector<TokenId> out(min_len + rng.below(max_len - min_len + 1));
  for (auto& t : out) t = static_cast<TokenId>(rng.below(V));
  return out;
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("vocabulary") {
    Vocabulary v({"a", "b", "<eos>"}, "<eos>");
    CHECK(v.terminator() == TokenId{2});
    CHECK(v.encode(" a  b\n<eos>") == std::vector<TokenId>{0, 1, 2});
    CHECK(v.decode(std::vector<TokenId>{1, 0}) == "b a");
    CHECK(testing::error_code_of([&] { v.encode("a zz"); }) == ErrorCode::TokenOutOfRange);
    CHECK(testing::error_code_of([] { Vocabulary({"a", "a"}); }) == ErrorCode::InvalidArgument);
    CHECK(testing::error_code_of([] { Vocabulary({"a"}); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("log_prob of the uniform model") {
    PolicyParams p(Vocabulary::numbered(4), 2);
    CHECK(log_prob(p, {}, std::vector<TokenId>{0, 3, 1}) == doctest::Approx(-3 * std::log(4.0)).epsilon(1e-12));
    CHECK(log_prob(p, std::vector<TokenId>{1}, std::vector<TokenId>{}) == 0.0);
    CHECK(testing::error_code_of([&] { log_prob(p, {}, std::vector<TokenId>{4}); }) == ErrorCode::TokenOutOfRange);
  }

  TEST_CASE("probabilities of all length-2 completions sum to one") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = PolicyParams::random(Vocabulary::numbered(3), 1, 1.5, seed);
      double total = 0.0;
      for (TokenId a = 0; a < 3; ++a)
        for (TokenId b = 0; b < 3; ++b) total += std::exp(log_prob(p, {}, std::vector<TokenId>{a, b}));
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("conditionals normalise in every state") {
    const auto p = PolicyParams::random(Vocabulary::numbered(5), 2, 3.0, 9);
    std::vector<double> lp(5);
    for (std::size_t s = 0; s < p.num_states(); ++s) {
      log_softmax(p.row(s), lp);
      double sum = 0.0;
      for (double v : lp) sum += std::exp(v);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  TEST_CASE("log_prob is additive over concatenation") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
      const auto p = PolicyParams::random(Vocabulary::numbered(4), 1 + static_cast<int>(rng.below(3)), 2.0, t);
      const auto x = random_tokens(rng, 4, 3);
      const auto y1 = random_tokens(rng, 4, 5);
      const auto y2 = random_tokens(rng, 4, 5);
      auto y = y1;
      y.insert(y.end(), y2.begin(), y2.end());
      auto xy1 = x;
      xy1.insert(xy1.end(), y1.begin(), y1.end());
      CHECK(log_prob(p, x, y) == doctest::Approx(log_prob(p, x, y1) + log_prob(p, xy1, y2)).epsilon(1e-12));
    }
  }

  TEST_CASE("argmax sampling is greedy with lowest-index ties") {
    const auto p = PolicyParams::random(Vocabulary::numbered(6), 2, 2.0, 1);
    SamplerConfig sc;
    sc.argmax = true;
    sc.max_len = 10;
    const auto seq = sample(p, std::vector<TokenId>{1}, sc);
    std::vector<TokenId> ctx{1};
    for (TokenId tok : seq.completion) {
      const auto lp = conditional_log_probs(p, ctx);
      CHECK(tok == std::max_element(lp.begin(), lp.end()) - lp.begin());
      ctx.push_back(tok);
    }
    PolicyParams flat(Vocabulary::numbered(3), 1);
    CHECK(sample(flat, {}, sc).completion == std::vector<TokenId>(10, 0));
  }

  TEST_CASE("sampling is deterministic per seed and stops at the terminator") {
    const auto p = PolicyParams::random(Vocabulary({"a", "b", "c", "<eos>"}, "<eos>"), 2, 1.0, 3);
    SamplerConfig sc;
    sc.seed = 77;
    sc.max_len = 50;
    const auto a = sample(p, {}, sc);
    CHECK(a == sample(p, {}, sc));
    for (std::size_t i = 0; i + 1 < a.completion.size(); ++i) CHECK(a.completion[i] != 3u);
    sc.stop_at_terminator = false;
    CHECK(sample(p, {}, sc).completion.size() == 50);
  }

  TEST_CASE("biased coin frequency") {
    PolicyParams p(Vocabulary::numbered(2), 1);
    p.row(p.state_index({}))[0] = std::log(0.8);
    p.row(p.state_index({}))[1] = std::log(0.2);
    SamplerConfig sc;
    sc.max_len = 1;
    int zeros = 0;
    for (int i = 0; i < 10000; ++i) {
      sc.seed = derive_seed(123, {static_cast<std::uint64_t>(i)});
      zeros += sample(p, {}, sc).completion[0] == 0;
    }
    CHECK(std::abs(zeros / 10000.0 - 0.8) <= 0.012);
  }

  TEST_CASE("sampling matches softmax by chi-square") {
    const auto p = PolicyParams::random(Vocabulary::numbered(6), 1, 1.0, 21);
    const std::vector<TokenId> ctx{2};
    const auto lp = conditional_log_probs(p, ctx);
    std::vector<double> counts(6, 0.0);
    SamplerConfig sc;
    sc.max_len = 1;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      sc.seed = derive_seed(5, {static_cast<std::uint64_t>(i)});
      counts[sample(p, ctx, sc).completion[0]] += 1;
    }
    double chi2 = 0.0;
    for (int t = 0; t < 6; ++t) {
      const double expected = n * std::exp(lp[t]);
      chi2 += (counts[t] - expected) * (counts[t] - expected) / expected;
    }
    // upper 0.001 quantile of chi-square with 5 degrees of freedom
    CHECK(chi2 < 20.515);
  }

  TEST_CASE("nll closed forms") {
    const auto det = deterministic_model(3, 1);
    std::vector<Sequence> batch;
    for (int i = 0; i < 3; ++i) {
      SamplerConfig sc;
      sc.argmax = true;
      sc.max_len = 5;
      batch.push_back(sample(det, std::vector<TokenId>{static_cast<TokenId>(i)}, sc));
    }
    const auto r = nll_loss_and_grad(det, batch);
    CHECK(r.loss == 0.0);
    CHECK(std::all_of(r.grad.begin(), r.grad.end(), [](double g) { return g == 0.0; }));

    PolicyParams flat(Vocabulary::numbered(4), 2);
    const std::vector<Sequence> one{{{}, {2}}};
    CHECK(nll_loss_and_grad(flat, one).loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(testing::error_code_of([&] { nll_loss_and_grad(flat, {}); }) == ErrorCode::EmptyBatch);
  }

  TEST_CASE("nll gradient matches finite differences on 100 random draws") {
    Rng rng(99);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t V = 2 + rng.below(4);
      const auto p = PolicyParams::random(Vocabulary::numbered(V), 1 + static_cast<int>(rng.below(2)), 2.0, t);
      std::vector<Sequence> batch(1 + rng.below(4));
      for (auto& s : batch) {
        s.prompt = random_tokens(rng, V, 2);
        s.completion = random_tokens(rng, V, 6, 1);
      }
      const auto analytic = nll_loss_and_grad(p, batch);
      const auto r = gradcheck::compare(p, analytic.grad, [&](const PolicyParams& q) {
        return nll_loss_and_grad(q, batch).loss;
      });
      worst = std::max(worst, r.max_rel_error);
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("sft training") {
    const auto p = PolicyParams::random(Vocabulary::numbered(4), 2, 1.0, 2);
    const std::vector<Sequence> data{{{1}, {2, 3, 0, 0}}};
    CHECK(sft_train(p, data, 0, 0.5) == p);

    const auto trained = sft_train(p, data, 200, 0.5);
    SamplerConfig sc;
    sc.argmax = true;
    sc.max_len = 4;
    CHECK(sample(trained, std::vector<TokenId>{1}, sc).completion == data[0].completion);

    const double inf = std::numeric_limits<double>::infinity();
    CHECK(testing::error_code_of([&] { sft_train(p, data, 2, inf); }) == ErrorCode::NonFiniteLoss);
  }

  TEST_CASE("sft loss is nonincreasing at small learning rate on the fixture task") {
    fixture::TaskConfig cfg;
    const auto task = fixture::build_task(cfg, 1);
    const auto data = fixture::sft_corpus(task, cfg, 2);
    PolicyParams start(task.vocab, cfg.order);
    for (double lr : {0.1, 0.05}) {
      std::vector<double> trace;
      sft_train(start, data, 40, lr, &trace);
      REQUIRE(trace.size() == 41);
      for (std::size_t e = 1; e < trace.size(); ++e) CHECK(trace[e] <= trace[e - 1]);
    }
  }

  TEST_CASE("checkpoint round trip") {
    const auto p = PolicyParams::random(Vocabulary({"x", "y", "<eos>"}, "<eos>"), 2, 1.3, 8);
    testing::TempDir dir("ckpt");
    save_checkpoint(dir.path / "p.json", p);
    CHECK(load_checkpoint(dir.path / "p.json") == p);
    auto j = to_json(p);
    j["logits"].erase(0);
    CHECK(testing::error_code_of([&] { params_from_json(j); }) == ErrorCode::SchemaViolation);
  }
}
