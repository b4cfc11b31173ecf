#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rrcycle/policy.hpp"
#include "rrcycle/reviewer.hpp"

namespace rrcycle::simpo {

struct SimpoConfig {
  double beta = 2.0;
  double gamma = 0.5;
  double lambda = 0.1;
  double lr = 1.0;
  int epochs_per_round = 3;
  double subsample_fraction = 1.0 / 3.0;
  int samples_per_prompt = 3;
  double sample_temperature = 0.4;
  std::size_t max_len = 24;
  // Pairs per gradient step within an epoch; 0 means the whole subsample.
  std::size_t batch_size = 8;
  int rounds = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PreferencePair {
  std::vector<TokenId> prompt;
  std::vector<TokenId> chosen;    // y_w
  std::vector<TokenId> rejected;  // y_l
  double chosen_score = 0.0;      // r_w, panel average
  double rejected_score = 0.0;    // r_l
  int round = 0;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// Length-normalized implicit reward (beta / |y|) * log pi(y | x).
/// Throws EmptyCompletion for |y| = 0.
double simpo_reward(const policy::PolicyParams& params, std::span<const TokenId> prompt,
                    std::span<const TokenId> completion, double beta);

// -log sigmoid(z), stable for large |z|.
double neg_log_sigmoid(double z);

/// Mean over pairs of -log sigmoid(r(x, y_w) - r(x, y_l) - gamma).
/// Throws EmptyBatch.
double simpo_loss(const policy::PolicyParams& params, std::span<const PreferencePair> pairs,
                  double beta, double gamma);

/// simpo_loss + lambda * (mean NLL of the chosen completions), with its exact
/// gradient. Throws EmptyBatch, NonFiniteLoss.
policy::LossAndGrad combined_loss_and_grad(const policy::PolicyParams& params,
                                           std::span<const PreferencePair> pairs,
                                           const SimpoConfig& config);

// Indices (argmax, argmin) of the scores, lowest index on ties; nullopt when
// all scores are equal.
std::optional<std::pair<std::size_t, std::size_t>> select_pair(std::span<const double> scores);

struct PairBuildResult {
  std::vector<PreferencePair> pairs;
  std::size_t skipped = 0;
  double mean_score = 0.0;  // over every scored completion
  std::size_t completions = 0;
};

/// Draws samples_per_prompt completions per prompt at sample_temperature,
/// scores each with the panel and pairs the best against the worst.
/// Prompts whose samples all tie, or whose best and worst completions are
/// identical, are skipped. Seeds derive from (config.seed, round, prompt, sample).
PairBuildResult build_preference_pairs(const policy::PolicyParams& params,
                                       const reviewer::ReviewerPanel& panel,
                                       std::span<const std::vector<TokenId>> prompts,
                                       const SimpoConfig& config, int round);

struct RoundReport {
  int round = 0;
  std::size_t pairs_built = 0;
  std::size_t pairs_skipped = 0;
  std::size_t pairs_trained = 0;
  double mean_score = 0.0;
  double loss = 0.0;  // combined loss on the trained subsample before the update

  friend bool operator==(const RoundReport&, const RoundReport&) = default;
};

struct IterationState {
  int round = 1;                       // t; params holds P_t
  policy::PolicyParams params;
  std::vector<PreferencePair> pair_pool;  // pairs built from the previous policy
  std::vector<double> score_history;      // mean panel score of each round's samples
  std::vector<RoundReport> reports;
};

/// One round: build pairs from P_t, subsample ceil(fraction * |pairs|) of
/// them, run epochs_per_round epochs of minibatch gradient descent on the
/// combined loss to get P_{t+1}. Throws NoPairs, NonFiniteLoss.
IterationState iterate(IterationState state, const reviewer::ReviewerPanel& panel,
                       std::span<const std::vector<TokenId>> prompts, const SimpoConfig& config);

std::size_t subsample_count(std::size_t pairs, double fraction);

nlohmann::json to_json(const PreferencePair& pair, const policy::Vocabulary& vocab);
PreferencePair pair_from_json(const nlohmann::json& j, const policy::Vocabulary& vocab);
nlohmann::json to_json(const SimpoConfig& config);
SimpoConfig simpo_config_from_json(const nlohmann::json& j, SimpoConfig defaults = {});

}  // namespace rrcycle::simpo
