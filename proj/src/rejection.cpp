#include "rrcycle/rejection.hpp"

#include <ostream>

#include "rrcycle/csv.hpp"
#include "rrcycle/rng.hpp"

namespace rrcycle::rejection {

namespace {

constexpr std::uint64_t kPromptStream = 0x9a;
constexpr std::uint64_t kTrialStream = 0x9b;

}  // namespace

BestOfN best_of_n(const Generator& generate, const Scorer& score, std::span<const TokenId> prompt,
                  std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "best-of-N needs N >= 1");
  BestOfN out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t draw_seed = seed + 1 + i;
    auto seq = generate(prompt, draw_seed);
    auto panel = score(seq, draw_seed);
    if (i == 0 || panel.avg > out.panel.avg) {
      out.best = std::move(seq);
      out.panel = std::move(panel);
      out.index = i;
    }
  }
  return out;
}

Generator policy_generator(const policy::PolicyParams& params, policy::SamplerConfig sampler) {
  return [&params, sampler](std::span<const TokenId> prompt, std::uint64_t seed) {
    auto sc = sampler;
    sc.seed = seed;
    return policy::sample(params, prompt, sc);
  };
}

Scorer panel_scorer(const reviewer::ReviewerPanel& panel) {
  return [&panel](const policy::Sequence& seq, std::uint64_t seed) { return panel.review(seq, seed); };
}

BestOfN best_of_n(const policy::PolicyParams& params, const reviewer::ReviewerPanel& panel,
                  std::span<const TokenId> prompt, std::size_t n, std::uint64_t seed,
                  const policy::SamplerConfig& sampler) {
  return best_of_n(policy_generator(params, sampler), panel_scorer(panel), prompt, n, seed);
}

SweepResult sweep(const Generator& generate, const Scorer& score,
                  std::span<const std::vector<TokenId>> prompts, std::span<const std::size_t> ns,
                  std::size_t trials, std::uint64_t seed, SweepTrace* trace) {
  if (ns.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one N");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1) throw Error(ErrorCode::InvalidArgument, "sweep Ns must be >= 1");
    if (i && ns[i] <= ns[i - 1]) throw Error(ErrorCode::InvalidArgument, "sweep Ns must be strictly increasing");
  }
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "sweep needs trials >= 1");
  if (prompts.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one prompt");

  SweepResult result;
  for (std::size_t n : ns) result.per_n.push_back({n, 0.0, 0.0, 0.0, 0.0, trials});
  if (trace) trace->best_avg_by_n.assign(trials, std::vector<double>(ns.size()));

  const std::size_t max_n = ns.back();
  for (std::size_t t = 0; t < trials; ++t) {
    Rng pick(derive_seed(seed, {t, kPromptStream}));
    const auto& prompt = prompts[pick.below(prompts.size())];
    const std::uint64_t trial_seed = derive_seed(seed, {t, kTrialStream});

    // Running best/worst over the nested draws; draw i uses trial_seed + 1 + i
    // exactly as best_of_n does, so prefix k reproduces best_of_n(k).
    reviewer::PanelResult best, worst;
    std::size_t next = 0;
    for (std::size_t i = 0; i < max_n; ++i) {
      const std::uint64_t draw_seed = trial_seed + 1 + i;
      const auto seq = generate(prompt, draw_seed);
      auto panel = score(seq, draw_seed);
      if (i == 0 || panel.avg < worst.avg) worst = panel;
      if (i == 0 || panel.avg > best.avg) best = std::move(panel);
      if (i + 1 == ns[next]) {
        auto& row = result.per_n[next];
        row.avg_of_best += best.avg;
        row.avg_max += best.max;
        row.avg_min += best.min;
        row.avg_worst += worst.avg;
        if (trace) trace->best_avg_by_n[t][next] = best.avg;
        ++next;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(trials);
  for (auto& row : result.per_n) {
    row.avg_of_best *= inv;
    row.avg_max *= inv;
    row.avg_min *= inv;
    row.avg_worst *= inv;
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  csv::Writer w(out, "sweep", {"N", "avg_of_best", "avg_max", "avg_min", "trials", "avg_worst"});
  for (const auto& r : result.per_n) {
    w.cell(r.n).cell(r.avg_of_best).cell(r.avg_max).cell(r.avg_min).cell(r.trials).cell(r.avg_worst);
    w.end_row();
  }
}

}  // namespace rrcycle::rejection
