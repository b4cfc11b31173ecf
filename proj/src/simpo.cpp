#include "rrcycle/simpo.hpp"

#include <algorithm>
#include <cmath>

#include "rrcycle/rng.hpp"

namespace rrcycle::simpo {

using nlohmann::json;
using policy::PolicyParams;

namespace {

constexpr std::uint64_t kSampleStream = 0;
constexpr std::uint64_t kReviewStream = 1;
constexpr std::uint64_t kSubsampleStream = 0x5b5a;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Mean -log sigmoid over the pair margins; optionally returns the margins.
double simpo_term(const PolicyParams& params, std::span<const PreferencePair> pairs, double beta,
                  double gamma, std::vector<double>* margins) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyBatch, "SimPO batch is empty");
  double total = 0.0;
  for (const auto& p : pairs) {
    const double z = simpo_reward(params, p.prompt, p.chosen, beta) -
                     simpo_reward(params, p.prompt, p.rejected, beta) - gamma;
    if (margins) margins->push_back(z);
    total += neg_log_sigmoid(z);
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<TokenId> ids_from_json(const json& j, const policy::Vocabulary& vocab) {
  if (j.is_string()) return vocab.encode(j.get<std::string>());
  return j.get<std::vector<TokenId>>();
}

}  // namespace

void SimpoConfig::validate() const {
  auto bad = [](const char* what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(beta > 0.0)) bad("beta must be positive");
  if (!(gamma >= 0.0)) bad("gamma must be nonnegative");
  if (!(lambda >= 0.0)) bad("lambda must be nonnegative");
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("lr must be nonnegative and finite");
  if (epochs_per_round < 0) bad("epochs_per_round must be nonnegative");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) bad("subsample_fraction must lie in (0, 1]");
  if (samples_per_prompt < 2) bad("samples_per_prompt must be >= 2");
  if (!(sample_temperature > 0.0)) bad("sample_temperature must be positive");
  if (max_len < 1) bad("max_len must be >= 1");
  if (rounds < 0) bad("rounds must be nonnegative");
}

double neg_log_sigmoid(double z) {
  return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double simpo_reward(const PolicyParams& params, std::span<const TokenId> prompt,
                    std::span<const TokenId> completion, double beta) {
  if (completion.empty()) throw Error(ErrorCode::EmptyCompletion, "SimPO reward needs |y| >= 1");
  return beta / static_cast<double>(completion.size()) * policy::log_prob(params, prompt, completion);
}

double simpo_loss(const PolicyParams& params, std::span<const PreferencePair> pairs, double beta,
                  double gamma) {
  return simpo_term(params, pairs, beta, gamma, nullptr);
}

policy::LossAndGrad combined_loss_and_grad(const PolicyParams& params,
                                           std::span<const PreferencePair> pairs,
                                           const SimpoConfig& config) {
  std::vector<double> margins;
  const double simpo = simpo_term(params, pairs, config.beta, config.gamma, &margins);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());

  policy::LossAndGrad out;
  out.grad.assign(params.logits().size(), 0.0);
  double nll = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    nll -= policy::log_prob(params, p.prompt, p.chosen);
    // d/dz [-log sigmoid(z)] = -sigmoid(-z)
    const double dz = -sigmoid(-margins[i]) * inv_n;
    const double w_chosen = dz * config.beta / static_cast<double>(p.chosen.size()) - config.lambda * inv_n;
    const double w_rejected = -dz * config.beta / static_cast<double>(p.rejected.size());
    policy::accumulate_log_prob_grad(params, p.prompt, p.chosen, w_chosen, out.grad);
    policy::accumulate_log_prob_grad(params, p.prompt, p.rejected, w_rejected, out.grad);
  }
  nll *= inv_n;
  out.loss = simpo + config.lambda * nll;
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "combined SimPO+NLL loss is not finite");
  return out;
}

std::optional<std::pair<std::size_t, std::size_t>> select_pair(std::span<const double> scores) {
  if (scores.empty()) return std::nullopt;
  std::size_t best = 0, worst = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
    if (scores[i] < scores[worst]) worst = i;
  }
  if (!(scores[best] > scores[worst])) return std::nullopt;
  return std::make_pair(best, worst);
}

PairBuildResult build_preference_pairs(const PolicyParams& params, const reviewer::ReviewerPanel& panel,
                                       std::span<const std::vector<TokenId>> prompts,
                                       const SimpoConfig& config, int round) {
  config.validate();
  PairBuildResult result;
  const auto k = static_cast<std::size_t>(config.samples_per_prompt);
  double score_sum = 0.0;
  std::vector<policy::Sequence> samples(k);
  std::vector<double> scores(k);
  for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
    for (std::size_t j = 0; j < k; ++j) {
      policy::SamplerConfig sc;
      sc.temperature = config.sample_temperature;
      sc.max_len = config.max_len;
      sc.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(round), pi, j, kSampleStream});
      samples[j] = policy::sample(params, prompts[pi], sc);
      scores[j] = panel.review(samples[j], derive_seed(config.seed, {static_cast<std::uint64_t>(round), pi, j, kReviewStream})).avg;
      score_sum += scores[j];
      ++result.completions;
    }
    auto sel = select_pair(scores);
    if (!sel || samples[sel->first].completion == samples[sel->second].completion) {
      ++result.skipped;
      continue;
    }
    PreferencePair pair;
    pair.prompt = prompts[pi];
    pair.chosen = samples[sel->first].completion;
    pair.rejected = samples[sel->second].completion;
    pair.chosen_score = scores[sel->first];
    pair.rejected_score = scores[sel->second];
    pair.round = round;
    result.pairs.push_back(std::move(pair));
  }
  if (result.completions) result.mean_score = score_sum / static_cast<double>(result.completions);
  return result;
}

std::size_t subsample_count(std::size_t pairs, double fraction) {
  if (pairs == 0) return 0;
  // The epsilon absorbs representation error, e.g. 9 * (1.0 / 3) must give 3.
  const double raw = std::ceil(fraction * static_cast<double>(pairs) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, pairs);
}

IterationState iterate(IterationState state, const reviewer::ReviewerPanel& panel,
                       std::span<const std::vector<TokenId>> prompts, const SimpoConfig& config) {
  config.validate();
  const int round = state.round;
  auto built = build_preference_pairs(state.params, panel, prompts, config, round);
  if (built.pairs.empty())
    throw Error(ErrorCode::NoPairs, "round " + std::to_string(round) + ": every prompt tied");

  Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(round), kSubsampleStream}));
  const auto picked = rng.sample_without_replacement(built.pairs.size(),
                                                     subsample_count(built.pairs.size(), config.subsample_fraction));
  std::vector<PreferencePair> train;
  train.reserve(picked.size());
  for (std::size_t i : picked) train.push_back(built.pairs[i]);

  RoundReport report;
  report.round = round;
  report.pairs_built = built.pairs.size();
  report.pairs_skipped = built.skipped;
  report.pairs_trained = train.size();
  report.mean_score = built.mean_score;
  report.loss = combined_loss_and_grad(state.params, train, config).loss;

  const std::size_t batch = config.batch_size == 0 ? train.size() : config.batch_size;
  for (int e = 0; e < config.epochs_per_round; ++e) {
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t len = std::min(batch, train.size() - start);
      auto step = combined_loss_and_grad(state.params, std::span(train).subspan(start, len), config);
      policy::apply_gradient(state.params, step.grad, config.lr);
    }
  }
  for (double v : state.params.logits())
    if (!std::isfinite(v))
      throw Error(ErrorCode::NonFiniteLoss, "round " + std::to_string(round) + ": parameters diverged");

  state.pair_pool = std::move(built.pairs);
  state.score_history.push_back(built.mean_score);
  state.reports.push_back(report);
  ++state.round;
  return state;
}

json to_json(const PreferencePair& pair, const policy::Vocabulary& vocab) {
  return {{"prompt", vocab.decode(pair.prompt)},
          {"y_w", vocab.decode(pair.chosen)},
          {"y_l", vocab.decode(pair.rejected)},
          {"r_w", pair.chosen_score},
          {"r_l", pair.rejected_score},
          {"round", pair.round}};
}

PreferencePair pair_from_json(const json& j, const policy::Vocabulary& vocab) {
  try {
    PreferencePair p;
    p.prompt = ids_from_json(j.at("prompt"), vocab);
    p.chosen = ids_from_json(j.at("y_w"), vocab);
    p.rejected = ids_from_json(j.at("y_l"), vocab);
    p.chosen_score = j.at("r_w").get<double>();
    p.rejected_score = j.at("r_l").get<double>();
    p.round = j.value("round", 0);
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("preference pair: ") + e.what());
  }
}

json to_json(const SimpoConfig& c) {
  return {{"beta", c.beta},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"lr", c.lr},
          {"epochs_per_round", c.epochs_per_round},
          {"subsample_fraction", c.subsample_fraction},
          {"samples_per_prompt", c.samples_per_prompt},
          {"sample_temperature", c.sample_temperature},
          {"max_len", c.max_len},
          {"batch_size", c.batch_size},
          {"rounds", c.rounds}};
}

SimpoConfig simpo_config_from_json(const json& j, SimpoConfig c) {
  try {
    c.beta = j.value("beta", c.beta);
    c.gamma = j.value("gamma", c.gamma);
    c.lambda = j.value("lambda", c.lambda);
    c.lr = j.value("lr", c.lr);
    c.epochs_per_round = j.value("epochs_per_round", c.epochs_per_round);
    c.subsample_fraction = j.value("subsample_fraction", c.subsample_fraction);
    c.samples_per_prompt = j.value("samples_per_prompt", c.samples_per_prompt);
    c.sample_temperature = j.value("sample_temperature", c.sample_temperature);
    c.max_len = j.value("max_len", c.max_len);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.rounds = j.value("rounds", c.rounds);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("simpo config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace rrcycle::simpo
