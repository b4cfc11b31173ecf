#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "rrcycle/policy.hpp"
#include "rrcycle/reviewer.hpp"

namespace rrcycle::rejection {

// Produces a completion for a prompt from a draw seed.
using Generator = std::function<policy::Sequence(std::span<const TokenId> prompt, std::uint64_t seed)>;
// Scores a completion; the seed drives reviewer noise.
using Scorer = std::function<reviewer::PanelResult(const policy::Sequence& seq, std::uint64_t seed)>;

struct BestOfN {
  policy::Sequence best;
  reviewer::PanelResult panel;
  std::size_t index = 0;  // 0-based draw index of the winner
};

/// Draws N completions with seeds seed+1 .. seed+N and keeps the one with
/// the highest panel average, lowest draw index on ties.
BestOfN best_of_n(const Generator& generate, const Scorer& score, std::span<const TokenId> prompt,
                  std::size_t n, std::uint64_t seed);

// Policy + panel convenience: sampler seed and review seed both come from the draw seed.
Generator policy_generator(const policy::PolicyParams& params, policy::SamplerConfig sampler);
Scorer panel_scorer(const reviewer::ReviewerPanel& panel);

BestOfN best_of_n(const policy::PolicyParams& params, const reviewer::ReviewerPanel& panel,
                  std::span<const TokenId> prompt, std::size_t n, std::uint64_t seed,
                  const policy::SamplerConfig& sampler);

struct SweepRow {
  std::size_t n = 0;
  double avg_of_best = 0.0;  // mean panel average of the selected paper
  double avg_max = 0.0;      // mean highest reviewer score of the selected paper
  double avg_min = 0.0;      // mean lowest reviewer score of the selected paper
  double avg_worst = 0.0;    // mean panel average of the worst of the N papers
  std::size_t trials = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepResult {
  std::vector<SweepRow> per_n;
  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

// Per-trial detail for nested-seed checks: best panel average after each
// prefix of draws, for every trial.
struct SweepTrace {
  std::vector<std::vector<double>> best_avg_by_n;  // [trial][i] = best avg at Ns[i]
};

/// For each trial, picks a prompt and a trial seed, then evaluates best-of-N
/// for every N in `ns` on nested draws (the first N draws of the largest N).
/// `ns` must be nonempty and strictly increasing.
SweepResult sweep(const Generator& generate, const Scorer& score,
                  std::span<const std::vector<TokenId>> prompts, std::span<const std::size_t> ns,
                  std::size_t trials, std::uint64_t seed, SweepTrace* trace = nullptr);

void write_sweep_csv(std::ostream& out, const SweepResult& result);

}  // namespace rrcycle::rejection
