#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rrcycle/common.hpp"

namespace rrcycle::policy {

class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws InvalidArgument on duplicate symbols, fewer than two symbols, or
  // a terminator that is not one of the symbols.
  explicit Vocabulary(std::vector<std::string> tokens,
                      std::optional<std::string> terminator = std::nullopt);
  // "t0", "t1", ..., no terminator.
  static Vocabulary numbered(std::size_t n);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view symbol) const;
  std::optional<TokenId> terminator() const { return terminator_; }

  // Whitespace-separated symbols -> ids. Unknown symbols raise TokenOutOfRange.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.terminator_ == b.terminator_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::optional<TokenId> terminator_;
};

// A prompt x and a completion y; all scoring is of y given x.
struct Sequence {
  std::vector<TokenId> prompt;
  std::vector<TokenId> completion;

  std::size_t length() const { return completion.size(); }
  friend bool operator==(const Sequence&, const Sequence&) = default;
};

struct SamplerConfig {
  double temperature = 1.0;
  std::size_t max_len = 32;
  std::uint64_t seed = 0;
  // Zero-temperature limit: argmax with lowest-index tie-breaking.
  bool argmax = false;
  // When false the terminator is an ordinary token and only max_len stops sampling.
  bool stop_at_terminator = true;

  void validate() const;
};

/// Logit-table autoregressive model. The conditional distribution of the
/// next token depends on the last `order` tokens of prompt ++ completion;
/// positions before the start of the text use a dedicated padding symbol,
/// so the table has (V + 1)^order rows of V logits.
class PolicyParams {
 public:
  PolicyParams() = default;
  // All-zero logits, i.e. the uniform model.
  PolicyParams(Vocabulary vocab, int order, std::uint64_t rng_seed = 0);
  // Logits drawn iid N(0, scale^2) from `seed`.
  static PolicyParams random(Vocabulary vocab, int order, double scale, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  int order() const { return order_; }
  std::size_t num_states() const { return num_states_; }
  std::uint64_t rng_seed() const { return rng_seed_; }

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  std::span<double> row(std::size_t state) { return {logits_.data() + state * vocab_size(), vocab_size()}; }
  std::span<const double> row(std::size_t state) const {
    return {logits_.data() + state * vocab_size(), vocab_size()};
  }

  // Row index for the next-token distribution after `context`.
  std::size_t state_index(std::span<const TokenId> context) const;

  // Throws InvalidArgument if any logit is non-finite.
  void validate() const;

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.order_ == b.order_ && a.vocab_ == b.vocab_ && a.rng_seed_ == b.rng_seed_ &&
           a.logits_ == b.logits_;
  }

 private:
  Vocabulary vocab_;
  int order_ = 1;
  std::size_t num_states_ = 0;
  std::uint64_t rng_seed_ = 0;
  std::vector<double> logits_;
};

// Same shape as PolicyParams::logits().
using Gradient = std::vector<double>;

struct LossAndGrad {
  double loss = 0.0;
  Gradient grad;
};

void log_softmax(std::span<const double> logits, std::span<double> out);

std::vector<double> conditional_log_probs(const PolicyParams& params, std::span<const TokenId> context);

/// Sum over completion positions of log pi(y_i | x, y_<i). Exact; 0 for an
/// empty completion. Throws TokenOutOfRange for ids >= V.
double log_prob(const PolicyParams& params, std::span<const TokenId> prompt,
                std::span<const TokenId> completion);
inline double log_prob(const PolicyParams& params, const Sequence& seq) {
  return log_prob(params, seq.prompt, seq.completion);
}

// grad += weight * d log_prob(prompt, completion) / d logits
void accumulate_log_prob_grad(const PolicyParams& params, std::span<const TokenId> prompt,
                              std::span<const TokenId> completion, double weight,
                              std::span<double> grad);

/// Autoregressive sampling from softmax(logits / temperature). Stops after
/// max_len tokens or right after emitting the terminator, which is kept.
Sequence sample(const PolicyParams& params, std::span<const TokenId> prompt, const SamplerConfig& config);

/// Mean negative log-likelihood of the batch completions and its exact
/// gradient. Throws EmptyBatch.
LossAndGrad nll_loss_and_grad(const PolicyParams& params, std::span<const Sequence> batch);

// params -= lr * grad
void apply_gradient(PolicyParams& params, std::span<const double> grad, double lr);

/// Full-batch gradient descent on the NLL, one step per epoch. When
/// `loss_trace` is given it receives the loss before each step plus the
/// final loss (epochs + 1 values). Throws NonFiniteLoss on divergence.
PolicyParams sft_train(PolicyParams params, std::span<const Sequence> dataset, int epochs, double lr,
                       std::vector<double>* loss_trace = nullptr);

nlohmann::json to_json(const PolicyParams& params);
PolicyParams params_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rrcycle::policy
