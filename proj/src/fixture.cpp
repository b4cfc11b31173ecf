#include "rrcycle/fixture.hpp"

#include "rrcycle/rng.hpp"

namespace rrcycle::fixture {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPromptStream = 1;
constexpr std::uint64_t kEvalPromptStream = 2;
constexpr std::uint64_t kTeacherStream = 3;
constexpr std::uint64_t kCorpusStream = 4;

std::vector<std::vector<TokenId>> draw_prompts(const Task& task, std::size_t count, std::size_t length,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<TokenId>> prompts(count);
  for (auto& p : prompts)
    for (std::size_t i = 0; i < length; ++i) p.push_back(task.content[rng.below(task.content.size())]);
  return prompts;
}

}  // namespace

policy::Vocabulary task_vocabulary(const TaskConfig& config) {
  std::vector<std::string> tokens{"<eos>"};
  for (std::size_t i = 0; i < config.marker_tokens; ++i) tokens.push_back("<m" + std::to_string(i) + ">");
  for (std::size_t i = 0; i < config.content_tokens; ++i) tokens.push_back("w" + std::to_string(i));
  return policy::Vocabulary(std::move(tokens), "<eos>");
}

Task build_task(const TaskConfig& config, std::uint64_t seed) {
  if (config.content_tokens < 1) throw Error(ErrorCode::InvalidArgument, "task needs content tokens");
  Task task;
  task.vocab = task_vocabulary(config);
  for (std::size_t i = 0; i < config.marker_tokens; ++i) task.markers.push_back(static_cast<TokenId>(1 + i));
  for (std::size_t i = 0; i < config.content_tokens; ++i)
    task.content.push_back(static_cast<TokenId>(1 + config.marker_tokens + i));

  task.gold = policy::PolicyParams::random(task.vocab, config.order, config.gold_scale, config.gold_seed);
  task.teacher = task.gold;
  Rng noise(derive_seed(seed, {config.gold_seed, kTeacherStream}));
  for (double& v : task.teacher.logits()) v += noise.normal(0.0, config.teacher_noise);

  task.prompts = draw_prompts(task, config.prompt_count, config.prompt_length,
                              derive_seed(config.gold_seed, {kPromptStream}));
  task.eval_prompts = draw_prompts(task, config.eval_prompt_count, config.prompt_length,
                                   derive_seed(config.gold_seed, {kEvalPromptStream}));
  task.weights = config.weights;
  task.weights.markers = task.markers;
  return task;
}

std::vector<policy::Sequence> sft_corpus(const Task& task, const TaskConfig& config, std::uint64_t seed) {
  std::vector<policy::Sequence> data;
  data.reserve(config.sft_examples);
  for (std::size_t i = 0; i < config.sft_examples; ++i) {
    policy::SamplerConfig sc;
    sc.temperature = config.teacher_temperature;
    sc.max_len = config.max_len;
    sc.seed = derive_seed(seed, {kCorpusStream, i});
    data.push_back(policy::sample(task.teacher, task.prompts[i % task.prompts.size()], sc));
  }
  return data;
}

json to_json(const TaskConfig& c) {
  return {{"content_tokens", c.content_tokens},
          {"marker_tokens", c.marker_tokens},
          {"order", c.order},
          {"gold_seed", c.gold_seed},
          {"gold_scale", c.gold_scale},
          {"teacher_noise", c.teacher_noise},
          {"teacher_temperature", c.teacher_temperature},
          {"prompt_count", c.prompt_count},
          {"eval_prompt_count", c.eval_prompt_count},
          {"prompt_length", c.prompt_length},
          {"sft_examples", c.sft_examples},
          {"sft_epochs", c.sft_epochs},
          {"sft_lr", c.sft_lr},
          {"max_len", c.max_len},
          {"quality",
           {{"intercept", c.weights.intercept},
            {"loglik_slope", c.weights.loglik_slope},
            {"length_min", c.weights.length_min},
            {"length_max", c.weights.length_max},
            {"length_bonus", c.weights.length_bonus},
            {"marker_bonus", c.weights.marker_bonus}}}};
}

TaskConfig task_config_from_json(const json& j, TaskConfig c) {
  try {
    c.content_tokens = j.value("content_tokens", c.content_tokens);
    c.marker_tokens = j.value("marker_tokens", c.marker_tokens);
    c.order = j.value("order", c.order);
    c.gold_seed = j.value("gold_seed", c.gold_seed);
    c.gold_scale = j.value("gold_scale", c.gold_scale);
    c.teacher_noise = j.value("teacher_noise", c.teacher_noise);
    c.teacher_temperature = j.value("teacher_temperature", c.teacher_temperature);
    c.prompt_count = j.value("prompt_count", c.prompt_count);
    c.eval_prompt_count = j.value("eval_prompt_count", c.eval_prompt_count);
    c.prompt_length = j.value("prompt_length", c.prompt_length);
    c.sft_examples = j.value("sft_examples", c.sft_examples);
    c.sft_epochs = j.value("sft_epochs", c.sft_epochs);
    c.sft_lr = j.value("sft_lr", c.sft_lr);
    c.max_len = j.value("max_len", c.max_len);
    if (j.contains("quality")) {
      const auto& q = j.at("quality");
      c.weights.intercept = q.value("intercept", c.weights.intercept);
      c.weights.loglik_slope = q.value("loglik_slope", c.weights.loglik_slope);
      c.weights.length_min = q.value("length_min", c.weights.length_min);
      c.weights.length_max = q.value("length_max", c.weights.length_max);
      c.weights.length_bonus = q.value("length_bonus", c.weights.length_bonus);
      c.weights.marker_bonus = q.value("marker_bonus", c.weights.marker_bonus);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("task config: ") + e.what());
  }
  if (c.prompt_count < 1 || c.eval_prompt_count < 1)
    throw Error(ErrorCode::InvalidArgument, "task needs at least one training and one evaluation prompt");
  if (c.sft_epochs < 0 || !(c.sft_lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "invalid SFT settings");
  return c;
}

}  // namespace rrcycle::fixture
