#include "helpers.hpp"

#include <cmath>
#include <sstream>

#include "rrcycle/fixture.hpp"
#include "rrcycle/rejection.hpp"
#include "rrcycle/rng.hpp"

using namespace rrcycle;
using namespace rrcycle::rejection;

namespace {

// Completion carries its draw seed; the score is looked up from a table.
Generator seed_generator() {
  return [](std::span<const TokenId> prompt, std::uint64_t seed) {
    return policy::Sequence{{prompt.begin(), prompt.end()}, {static_cast<TokenId>(seed & 0xffffffu)}};
  };
}

Scorer uniform_scorer() {
  return [](const policy::Sequence& s, std::uint64_t) {
    Rng rng(derive_seed(0xabc, {s.completion[0]}));
    const double v = 1.0 + 9.0 * rng.uniform();
    return reviewer::aggregate({v}, 5.5);
  };
}

}  // namespace

TEST_SUITE("rejection") {
  TEST_CASE("best of one returns the single draw") {
    const auto gen = seed_generator();
    const auto b = best_of_n(gen, uniform_scorer(), std::vector<TokenId>{}, 1, 40);
    CHECK(b.index == 0);
    CHECK(b.best == gen({}, 41));
  }

  TEST_CASE("best of n picks the highest panel average") {
    const std::vector<double> table{5.2, 6.1, 4.8};
    Generator gen = [](std::span<const TokenId>, std::uint64_t seed) {
      return policy::Sequence{{}, {static_cast<TokenId>(seed)}};
    };
    Scorer sc = [&](const policy::Sequence& s, std::uint64_t) {
      return reviewer::aggregate({table[s.completion[0] - 1]}, 5.5);
    };
    const auto b = best_of_n(gen, sc, std::vector<TokenId>{}, 3, 0);
    CHECK(b.index == 1);
    CHECK(b.panel.avg == 6.1);
    CHECK(testing::error_code_of([&] { best_of_n(gen, sc, std::vector<TokenId>{}, 0, 0); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("nested draws never lower the best score") {
    const auto gen = seed_generator();
    const auto sc = uniform_scorer();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      double prev = 0.0;
      for (std::size_t n = 1; n <= 30; ++n) {
        const double v = best_of_n(gen, sc, std::vector<TokenId>{}, n, seed).panel.avg;
        CHECK(v >= prev);
        prev = v;
      }
    }
  }

  TEST_CASE("degenerate sweep equals a single best_of_n call") {
    const auto task = fixture::build_task({}, 1);
    const reviewer::ReviewerPanel panel({3, 0.5, 5.5, 2}, task.gold, task.weights);
    policy::SamplerConfig sampler;
    sampler.temperature = 0.7;
    sampler.max_len = 24;
    const std::vector<std::vector<TokenId>> prompts{task.eval_prompts[0]};
    const std::vector<std::size_t> ns{1};
    const auto gen = policy_generator(task.teacher, sampler);
    const auto sc = panel_scorer(panel);
    SweepTrace trace;
    const auto r = sweep(gen, sc, prompts, ns, 1, 5, &trace);
    REQUIRE(r.per_n.size() == 1);
    const auto& row = r.per_n[0];
    CHECK(row.trials == 1);
    CHECK(row.avg_of_best == trace.best_avg_by_n[0][0]);
    CHECK(row.avg_min <= row.avg_of_best);
    CHECK(row.avg_of_best <= row.avg_max);
    CHECK(row.avg_worst == row.avg_of_best);
  }

  TEST_CASE("uniform scores follow the order-statistics oracle") {
    const std::vector<std::size_t> ns{1, 5, 10, 50};
    const std::vector<std::vector<TokenId>> prompts{{}};
    const std::size_t trials = 2000;
    SweepTrace trace;
    const auto r = sweep(seed_generator(), uniform_scorer(), prompts, ns, trials, 77, &trace);
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const double N = static_cast<double>(ns[i]);
      const double mean = 1.0 + 9.0 * N / (N + 1.0);
      // variance of the max of N iid U(1, 10)
      const double var = 81.0 * N / ((N + 1.0) * (N + 1.0) * (N + 2.0));
      CHECK(std::abs(r.per_n[i].avg_of_best - mean) < 3.0 * std::sqrt(var / trials));
    }
  }

  TEST_CASE("sweep is deterministic and row invariants hold") {
    const auto task = fixture::build_task({}, 1);
    const reviewer::ReviewerPanel panel({3, 0.5, 5.5, 2}, task.gold, task.weights);
    policy::SamplerConfig sampler;
    sampler.temperature = 0.4;
    sampler.max_len = 24;
    const std::vector<std::size_t> ns{1, 3, 8};
    const auto run = [&] {
      SweepTrace trace;
      auto r = sweep(policy_generator(task.teacher, sampler), panel_scorer(panel), task.eval_prompts, ns, 30, 9, &trace);
      return std::make_pair(r, trace);
    };
    const auto [a, ta] = run();
    const auto [b, tb] = run();
    CHECK(a == b);
    for (const auto& row : a.per_n) {
      CHECK(row.avg_min <= row.avg_of_best);
      CHECK(row.avg_of_best <= row.avg_max);
      CHECK(row.avg_worst <= row.avg_of_best);
    }
    for (const auto& t : ta.best_avg_by_n)
      for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] >= t[i - 1]);

    std::ostringstream out;
    write_sweep_csv(out, a);
    CHECK(out.str().find("N,avg_of_best,avg_max,avg_min,trials") != std::string::npos);
  }
}
