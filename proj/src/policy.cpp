#include "rrcycle/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rrcycle/rng.hpp"

namespace rrcycle::policy {

using nlohmann::json;

namespace {

constexpr std::string_view kCheckpointFormat = "rrcycle.policy";
constexpr int kCheckpointVersion = 1;

void check_tokens(const PolicyParams& params, std::span<const TokenId> ids) {
  for (TokenId id : ids)
    if (id >= params.vocab_size())
      throw Error(ErrorCode::TokenOutOfRange,
                  "token id " + std::to_string(id) + " >= vocabulary size " +
                      std::to_string(params.vocab_size()));
}

std::vector<TokenId> concat(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<TokenId> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::optional<std::string> terminator)
    : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) throw Error(ErrorCode::InvalidArgument, "vocabulary needs at least 2 symbols");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate vocabulary symbol '" + tokens_[i] + "'");
  }
  if (terminator) {
    auto id = find(*terminator);
    if (!id) throw Error(ErrorCode::InvalidArgument, "terminator '" + *terminator + "' not in vocabulary");
    terminator_ = id;
  }
}

Vocabulary Vocabulary::numbered(std::size_t n) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(i));
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size())
    throw Error(ErrorCode::TokenOutOfRange, "token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::istringstream in{std::string(text)};
  std::string sym;
  while (in >> sym) {
    auto id = find(sym);
    if (!id) throw Error(ErrorCode::TokenOutOfRange, "unknown symbol '" + sym + "'");
    ids.push_back(*id);
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void SamplerConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(ErrorCode::InvalidArgument, "sampler temperature must be positive");
  if (max_len < 1) throw Error(ErrorCode::InvalidArgument, "sampler max_len must be >= 1");
}

// --- PolicyParams -----------------------------------------------------------

PolicyParams::PolicyParams(Vocabulary vocab, int order, std::uint64_t rng_seed)
    : vocab_(std::move(vocab)), order_(order), rng_seed_(rng_seed) {
  if (order_ < 1) throw Error(ErrorCode::InvalidArgument, "policy order must be >= 1");
  if (vocab_.size() < 2) throw Error(ErrorCode::InvalidArgument, "policy needs a vocabulary of size >= 2");
  std::size_t states = 1;
  for (int k = 0; k < order_; ++k) {
    if (states > (std::size_t{1} << 24) / (vocab_.size() + 1))
      throw Error(ErrorCode::InvalidArgument, "logit table too large for this order and vocabulary");
    states *= vocab_.size() + 1;
  }
  num_states_ = states;
  logits_.assign(num_states_ * vocab_.size(), 0.0);
}

PolicyParams PolicyParams::random(Vocabulary vocab, int order, double scale, std::uint64_t seed) {
  PolicyParams params(std::move(vocab), order, seed);
  Rng rng(seed);
  for (double& v : params.logits_) v = rng.normal(0.0, scale);
  return params;
}

std::size_t PolicyParams::state_index(std::span<const TokenId> context) const {
  const std::size_t base = vocab_size() + 1;
  const std::size_t pad = vocab_size();
  std::size_t state = 0;
  std::size_t mult = 1;
  for (int k = 0; k < order_; ++k) {
    const std::size_t c =
        static_cast<std::size_t>(k) < context.size() ? context[context.size() - 1 - k] : pad;
    state += c * mult;
    mult *= base;
  }
  return state;
}

void PolicyParams::validate() const {
  for (double v : logits_)
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "policy logits must be finite");
}

// --- scoring ----------------------------------------------------------------

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

std::vector<double> conditional_log_probs(const PolicyParams& params, std::span<const TokenId> context) {
  std::vector<double> out(params.vocab_size());
  log_softmax(params.row(params.state_index(context)), out);
  return out;
}

double log_prob(const PolicyParams& params, std::span<const TokenId> prompt,
                std::span<const TokenId> completion) {
  check_tokens(params, prompt);
  check_tokens(params, completion);
  const auto ctx = concat(prompt, completion);
  std::vector<double> lp(params.vocab_size());
  double total = 0.0;
  for (std::size_t i = 0; i < completion.size(); ++i) {
    const std::span<const TokenId> prefix(ctx.data(), prompt.size() + i);
    log_softmax(params.row(params.state_index(prefix)), lp);
    total += lp[completion[i]];
  }
  return total;
}

void accumulate_log_prob_grad(const PolicyParams& params, std::span<const TokenId> prompt,
                              std::span<const TokenId> completion, double weight,
                              std::span<double> grad) {
  check_tokens(params, prompt);
  check_tokens(params, completion);
  const std::size_t V = params.vocab_size();
  const auto ctx = concat(prompt, completion);
  std::vector<double> lp(V);
  for (std::size_t i = 0; i < completion.size(); ++i) {
    const std::span<const TokenId> prefix(ctx.data(), prompt.size() + i);
    const std::size_t state = params.state_index(prefix);
    log_softmax(params.row(state), lp);
    double* g = grad.data() + state * V;
    // d log p(y) / d z_t = [t == y] - p(t)
    for (std::size_t t = 0; t < V; ++t) g[t] -= weight * std::exp(lp[t]);
    g[completion[i]] += weight;
  }
}

Sequence sample(const PolicyParams& params, std::span<const TokenId> prompt, const SamplerConfig& config) {
  config.validate();
  check_tokens(params, prompt);
  Rng rng(config.seed);
  const std::size_t V = params.vocab_size();
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  std::vector<double> weights(V);
  Sequence seq;
  seq.prompt.assign(prompt.begin(), prompt.end());
  while (seq.completion.size() < config.max_len) {
    const auto row = params.row(params.state_index(ctx));
    TokenId next = 0;
    if (config.argmax) {
      next = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      const double mx = *std::max_element(row.begin(), row.end());
      for (std::size_t t = 0; t < V; ++t) weights[t] = std::exp((row[t] - mx) / config.temperature);
      next = static_cast<TokenId>(rng.categorical(weights));
    }
    seq.completion.push_back(next);
    ctx.push_back(next);
    if (config.stop_at_terminator && params.vocab().terminator() == next) break;
  }
  return seq;
}

LossAndGrad nll_loss_and_grad(const PolicyParams& params, std::span<const Sequence> batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "NLL batch is empty");
  LossAndGrad out;
  out.grad.assign(params.logits().size(), 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& seq : batch) {
    out.loss -= log_prob(params, seq);
    accumulate_log_prob_grad(params, seq.prompt, seq.completion, -w, out.grad);
  }
  out.loss *= w;
  return out;
}

void apply_gradient(PolicyParams& params, std::span<const double> grad, double lr) {
  auto logits = params.logits();
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= lr * grad[i];
}

PolicyParams sft_train(PolicyParams params, std::span<const Sequence> dataset, int epochs, double lr,
                       std::vector<double>* loss_trace) {
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (epochs == 0) return params;
  for (int e = 0; e < epochs; ++e) {
    auto step = nll_loss_and_grad(params, dataset);
    if (!std::isfinite(step.loss))
      throw Error(ErrorCode::NonFiniteLoss, "SFT loss diverged at epoch " + std::to_string(e));
    if (loss_trace) loss_trace->push_back(step.loss);
    apply_gradient(params, step.grad, lr);
  }
  if (loss_trace) {
    const double final_loss = nll_loss_and_grad(params, dataset).loss;
    if (!std::isfinite(final_loss)) throw Error(ErrorCode::NonFiniteLoss, "SFT loss diverged");
    loss_trace->push_back(final_loss);
  }
  return params;
}

// --- checkpoints --------------------------------------------------------------

json to_json(const PolicyParams& params) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["vocabulary"] = params.vocab().tokens();
  if (auto t = params.vocab().terminator())
    j["terminator"] = params.vocab().token(*t);
  else
    j["terminator"] = nullptr;
  j["order"] = params.order();
  j["rng_seed"] = params.rng_seed();
  j["logits"] = std::vector<double>(params.logits().begin(), params.logits().end());
  return j;
}

PolicyParams params_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw Error(ErrorCode::SchemaViolation, "not a policy checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw Error(ErrorCode::SchemaViolation, "unsupported checkpoint version");
    std::optional<std::string> terminator;
    if (!j.at("terminator").is_null()) terminator = j.at("terminator").get<std::string>();
    Vocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>(), terminator);
    PolicyParams params(std::move(vocab), j.at("order").get<int>(), j.at("rng_seed").get<std::uint64_t>());
    const auto logits = j.at("logits").get<std::vector<double>>();
    if (logits.size() != params.logits().size())
      throw Error(ErrorCode::SchemaViolation, "logit table has " + std::to_string(logits.size()) +
                                                  " entries, expected " +
                                                  std::to_string(params.logits().size()));
    std::copy(logits.begin(), logits.end(), params.logits().begin());
    params.validate();
    return params;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("policy checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(params).dump() << '\n';
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace rrcycle::policy
