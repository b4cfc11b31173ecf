#include "helpers.hpp"

#include <cmath>

#include "gradcheck.hpp"
#include "rrcycle/fixture.hpp"
#include "rrcycle/rng.hpp"
#include "rrcycle/simpo.hpp"

using namespace rrcycle;
using namespace rrcycle::simpo;
using policy::PolicyParams;
using policy::Vocabulary;

namespace {

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

PreferencePair random_pair(Rng& rng, std::size_t V) {
  PreferencePair p;
  p.prompt = random_tokens(rng, V, 3);
  p.chosen = random_tokens(rng, V, 6, 1);
  p.rejected = random_tokens(rng, V, 6, 1);
  return p;
}

// -log sigmoid written directly from its definition.
double plain_neg_log_sigmoid(double z) { return -std::log(1.0 / (1.0 + std::exp(-z))); }

double plain_token_sum(const PolicyParams& p, const std::vector<TokenId>& x, const std::vector<TokenId>& y) {
  std::vector<TokenId> ctx = x;
  double s = 0.0;
  for (TokenId t : y) {
    const auto row = p.row(p.state_index(ctx));
    double z = 0.0;
    for (double v : row) z += std::exp(v);
    s += row[t] - std::log(z);
    ctx.push_back(t);
  }
  return s;
}

reviewer::ReviewerPanel flat_panel(const PolicyParams& gold) {
  reviewer::StructureWeights w;
  w.intercept = 5.0;
  w.loglik_slope = 0.0;
  w.length_bonus = 0.0;
  w.marker_bonus = 0.0;
  return reviewer::ReviewerPanel({3, 0.0, 5.5, 1}, gold, w);
}

}  // namespace

TEST_SUITE("simpo") {
  TEST_CASE("reward closed forms") {
    const auto det = deterministic_model(3, 1);
    CHECK(simpo_reward(det, std::vector<TokenId>{1}, std::vector<TokenId>{1, 1, 1}, 2.0) == 0.0);
    PolicyParams flat(Vocabulary::numbered(4), 2);
    CHECK(simpo_reward(flat, {}, std::vector<TokenId>{0, 1, 2}, 2.0) ==
          doctest::Approx(-2 * std::log(4.0)).epsilon(1e-12));
    CHECK(testing::error_code_of([&] { simpo_reward(flat, {}, {}, 2.0); }) == ErrorCode::EmptyCompletion);
  }

  TEST_CASE("reward equals beta over length times per-token sum and is linear in beta") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      const auto p = PolicyParams::random(Vocabulary::numbered(5), 2, 2.0, t);
      const auto x = random_tokens(rng, 5, 3);
      const auto y = random_tokens(rng, 5, 8, 1);
      const double beta = 0.1 + 3 * rng.uniform();
      const double r = simpo_reward(p, x, y, beta);
      CHECK(r == doctest::Approx(beta / y.size() * plain_token_sum(p, x, y)).epsilon(1e-12));
      CHECK(simpo_reward(p, x, y, 2 * beta) == doctest::Approx(2 * r).epsilon(1e-14));
    }
  }

  TEST_CASE("loss at margin zero and in the saturated tail") {
    PolicyParams flat(Vocabulary::numbered(4), 1);
    // rewards: chosen 0 under a model that makes it certain, rejected uniform
    PolicyParams p = flat;
    p.row(p.state_index({}))[1] = 1000.0;
    const std::vector<TokenId> x{};
    PreferencePair pair{x, {1}, {2}, 0, 0, 1};
    const double gap = simpo_reward(p, x, pair.chosen, 2.0) - simpo_reward(p, x, pair.rejected, 2.0);
    CHECK(simpo_loss(p, std::vector{pair}, 2.0, gap) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(simpo_loss(p, std::vector{pair}, 2.0, gap) - std::log(2.0)) <= 1e-9);
    CHECK(simpo_loss(p, std::vector{pair}, 2.0, gap - 20.0) < 2.1e-9);
  }

  TEST_CASE("loss matches a term-by-term scalar evaluation") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
      const auto p = PolicyParams::random(Vocabulary::numbered(4), 1, 1.5, t);
      std::vector<PreferencePair> pairs(1 + rng.below(5));
      for (auto& pr : pairs) pr = random_pair(rng, 4);
      const double beta = 0.5 + rng.uniform() * 2, gamma = rng.uniform();
      double expected = 0.0;
      for (const auto& pr : pairs) {
        const double rw = beta / pr.chosen.size() * plain_token_sum(p, pr.prompt, pr.chosen);
        const double rl = beta / pr.rejected.size() * plain_token_sum(p, pr.prompt, pr.rejected);
        expected += plain_neg_log_sigmoid(rw - rl - gamma);
      }
      expected /= pairs.size();
      CHECK(simpo_loss(p, pairs, beta, gamma) == doctest::Approx(expected).epsilon(1e-10));
    }
  }

  TEST_CASE("loss decreases strictly in the reward gap") {
    PolicyParams p(Vocabulary::numbered(3), 1);
    const PreferencePair pair{{}, {0}, {1}, 0, 0, 1};
    double prev = INFINITY;
    for (double g = 3.0; g >= -3.0; g -= 0.25) {
      const double l = simpo_loss(p, std::vector{pair}, 1.0, g);  // gap - gamma = -g
      CHECK(l < prev);
      prev = l;
    }
  }

  TEST_CASE("lambda zero reduces to the SimPO loss bit for bit") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
      const auto p = PolicyParams::random(Vocabulary::numbered(4), 2, 1.0, t);
      std::vector<PreferencePair> pairs(1 + rng.below(4));
      for (auto& pr : pairs) pr = random_pair(rng, 4);
      SimpoConfig cfg;
      cfg.lambda = 0.0;
      cfg.beta = 0.5 + rng.uniform();
      cfg.gamma = rng.uniform();
      CHECK(combined_loss_and_grad(p, pairs, cfg).loss == simpo_loss(p, pairs, cfg.beta, cfg.gamma));
    }
  }

  TEST_CASE("deterministic model gives the closed-form combined loss") {
    const auto det = deterministic_model(3, 1);
    // completions that follow the deterministic chain from prompt {0}: 0 -> 0 -> 0
    const PreferencePair pair{{0}, {0, 0}, {0}, 0, 0, 1};
    SimpoConfig cfg;
    cfg.gamma = 0.5;
    cfg.lambda = 1.0;
    const auto r = combined_loss_and_grad(det, std::vector{pair}, cfg);
    CHECK(std::abs(r.loss - std::log1p(std::exp(0.5))) <= 1e-9);
  }

  TEST_CASE("combined gradient matches finite differences") {
    Rng rng(4);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t V = 2 + rng.below(4);
      const auto p = PolicyParams::random(Vocabulary::numbered(V), 1 + static_cast<int>(rng.below(2)), 1.5, t);
      std::vector<PreferencePair> pairs(1 + rng.below(4));
      for (auto& pr : pairs) pr = random_pair(rng, V);
      SimpoConfig cfg;
      cfg.beta = 0.2 + 3 * rng.uniform();
      cfg.gamma = 2 * rng.uniform();
      cfg.lambda = rng.uniform();
      const auto analytic = combined_loss_and_grad(p, pairs, cfg);
      const auto r = gradcheck::compare(p, analytic.grad, [&](const PolicyParams& q) {
        return combined_loss_and_grad(q, pairs, cfg).loss;
      });
      worst = std::max(worst, r.max_rel_error);
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("pair selection") {
    const std::vector<double> s{6.0, 5.0, 4.0};
    CHECK(select_pair(s) == std::make_pair<std::size_t, std::size_t>(0, 2));
    CHECK_FALSE(select_pair(std::vector<double>{5.0, 5.0, 5.0}).has_value());
  }

  TEST_CASE("tied panel scores skip every prompt") {
    const auto task = fixture::build_task({}, 1);
    const auto panel = flat_panel(task.gold);
    SimpoConfig cfg;
    const auto r = build_preference_pairs(task.gold, panel, std::span(task.prompts).first(5), cfg, 1);
    CHECK(r.pairs.empty());
    CHECK(r.skipped == 5);
    IterationState st{1, task.gold, {}, {}, {}};
    CHECK(testing::error_code_of([&] { iterate(st, panel, std::span(task.prompts).first(5), cfg); }) ==
          ErrorCode::NoPairs);
  }

  TEST_CASE("pairs on 100 fixture prompts") {
    fixture::TaskConfig tc;
    tc.prompt_count = 100;
    const auto task = fixture::build_task(tc, 1);
    const reviewer::ReviewerPanel panel({3, 0.5, 5.5, 9}, task.gold, task.weights);
    SimpoConfig cfg;
    cfg.seed = 4;
    const auto r = build_preference_pairs(task.teacher, panel, task.prompts, cfg, 2);
    CHECK(r.pairs.size() + r.skipped == 100);
    for (const auto& p : r.pairs) {
      CHECK(p.chosen_score > p.rejected_score);
      CHECK(p.round == 2);
    }
    CHECK(r.completions == 300);
  }

  TEST_CASE("subsample arithmetic") {
    CHECK(subsample_count(9, 1.0 / 3.0) == 3);
    CHECK(subsample_count(10, 1.0 / 3.0) == 4);
    CHECK(subsample_count(1, 1.0 / 3.0) == 1);
    CHECK(subsample_count(0, 0.5) == 0);
  }

  TEST_CASE("iterate with lr zero leaves parameters untouched") {
    const auto task = fixture::build_task({}, 1);
    const reviewer::ReviewerPanel panel({3, 0.5, 5.5, 2}, task.gold, task.weights);
    SimpoConfig cfg;
    cfg.lr = 0.0;
    IterationState st{3, task.teacher, {}, {}, {}};
    const auto next = iterate(st, panel, task.prompts, cfg);
    CHECK(next.params == task.teacher);
    CHECK(next.round == 4);
    REQUIRE(next.reports.size() == 1);
    CHECK(next.reports[0].pairs_trained == subsample_count(next.reports[0].pairs_built, cfg.subsample_fraction));
  }

  TEST_CASE("iterate is deterministic for a fixed seed") {
    const auto task = fixture::build_task({}, 3);
    const reviewer::ReviewerPanel panel({3, 0.5, 5.5, 5}, task.gold, task.weights);
    SimpoConfig cfg;
    cfg.seed = 17;
    auto run = [&] {
      IterationState st{1, task.teacher, {}, {}, {}};
      for (int r = 0; r < 2; ++r) st = iterate(std::move(st), panel, task.prompts, cfg);
      return st;
    };
    const auto a = run(), b = run();
    CHECK(a.params == b.params);
    CHECK(a.score_history == b.score_history);
    CHECK(a.pair_pool == b.pair_pool);
  }

  TEST_CASE("pair json uses the documented keys") {
    Vocabulary v({"a", "b", "c"});
    const PreferencePair p{{0}, {1, 2}, {2}, 6.5, 4.0, 2};
    const auto j = to_json(p, v);
    for (const char* k : {"prompt", "y_w", "y_l", "r_w", "r_l", "round"}) CHECK(j.contains(k));
    CHECK(pair_from_json(j, v) == p);
  }

  TEST_CASE("config validation") {
    SimpoConfig c;
    c.beta = 0;
    CHECK(testing::error_code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
    c = {};
    c.subsample_fraction = 1.5;
    CHECK(testing::error_code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
    c = {};
    CHECK(simpo_config_from_json(to_json(c)).lr == c.lr);
  }
}
