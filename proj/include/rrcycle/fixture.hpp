#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "rrcycle/policy.hpp"
#include "rrcycle/reviewer.hpp"

namespace rrcycle::fixture {

/// Descriptor of the synthetic research task. A hidden "gold" model defines
/// what good text looks like to the reviewer panel; the SFT corpus comes
/// from a noisy copy of it (the "teacher"), so the SFT policy starts with
/// room to improve.
struct TaskConfig {
  std::size_t content_tokens = 9;
  std::size_t marker_tokens = 2;
  int order = 2;
  std::uint64_t gold_seed = 7;
  double gold_scale = 2.5;
  double teacher_noise = 1.5;
  double teacher_temperature = 1.0;
  std::size_t prompt_count = 96;
  std::size_t eval_prompt_count = 32;
  std::size_t prompt_length = 2;
  std::size_t sft_examples = 256;
  int sft_epochs = 60;
  double sft_lr = 1.0;
  std::size_t max_len = 24;
  reviewer::StructureWeights weights;  // markers are filled in by build_task
};

struct Task {
  policy::Vocabulary vocab;
  policy::PolicyParams gold;
  policy::PolicyParams teacher;
  std::vector<std::vector<TokenId>> prompts;       // training prompts
  std::vector<std::vector<TokenId>> eval_prompts;  // held out
  reviewer::StructureWeights weights;
  std::vector<TokenId> markers;
  std::vector<TokenId> content;
};

// Vocabulary: "<eos>" (terminator), "<m0>".. markers, "w0".. content tokens.
policy::Vocabulary task_vocabulary(const TaskConfig& config);

/// Gold model, prompts and reviewer weights depend only on config (gold_seed);
/// the teacher depends on `seed` as well.
Task build_task(const TaskConfig& config, std::uint64_t seed);

// Teacher samples used as the SFT corpus.
std::vector<policy::Sequence> sft_corpus(const Task& task, const TaskConfig& config, std::uint64_t seed);

nlohmann::json to_json(const TaskConfig& config);
TaskConfig task_config_from_json(const nlohmann::json& j, TaskConfig defaults = {});

}  // namespace rrcycle::fixture
