#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrcycle/detect.hpp"
#include "rrcycle/fixture.hpp"
#include "rrcycle/metrics.hpp"
#include "rrcycle/reviewer.hpp"
#include "rrcycle/simpo.hpp"

namespace rrcycle::harness {

struct EvaluationConfig {
  // Policy quality: mean panel average over eval prompts, k samples each.
  int samples_per_prompt = 4;
  double temperature = 0.4;
  // Best-of-N sweep run on the final policy.
  std::vector<std::size_t> sweep_ns{1, 5, 10, 50, 100};
  std::size_t sweep_trials = 100;
  // Detector experiment on the final policy.
  std::size_t detect_samples = 200;  // per class
  std::size_t detect_length = 64;
  double detect_other_scale = 2.5;  // logit scale of the independent "human" source
};

struct DetectorSettings {
  std::optional<double> epsilon;  // calibrated on a held-out half when absent
  std::size_t min_length = 16;
};

struct ExperimentConfig {
  fixture::TaskConfig task;
  simpo::SimpoConfig simpo;
  reviewer::PanelConfig panel;
  DetectorSettings detector;
  EvaluationConfig evaluation;
  std::filesystem::path output_dir = "runs/default";
  std::uint64_t global_seed = 1;

  // Module seeds are derived from global_seed; nested "seed" keys in the
  // config file are ignored.
  void derive_seeds();
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
// Reads the JSON config; RRCYCLE_OUTPUT_DIR, when set, replaces output_dir.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig default_config();

// Everything derived from a config before training starts.
struct Setup {
  fixture::Task task;
  reviewer::ReviewerPanel panel;
  std::vector<policy::Sequence> sft_data;
  policy::PolicyParams initial;  // uniform model the SFT starts from
};

Setup make_setup(const ExperimentConfig& config);

struct PolicyScore {
  double mean_score = 0.0;
  double accept_rate = 0.0;
};

/// Mean panel average (and accept rate) of the policy's samples on the
/// evaluation prompts. Every policy evaluated with the same seed sees the
/// same sampler and reviewer seeds, so stage-to-stage differences are not
/// sampling noise.
PolicyScore evaluate_policy(const policy::PolicyParams& params, const reviewer::ReviewerPanel& panel,
                            std::span<const std::vector<TokenId>> prompts, const EvaluationConfig& eval,
                            std::size_t max_len, std::uint64_t seed);

policy::PolicyParams train_sft(const ExperimentConfig& config, const Setup& setup,
                               std::vector<double>* loss_trace = nullptr);

struct CycleResult {
  policy::PolicyParams final_params;
  std::vector<PolicyScore> stage_scores;  // [0] = SFT policy P_1, [t] = after round t
  std::vector<simpo::RoundReport> reports;
};

/// SFT init followed by config.simpo.rounds iterate() rounds. Writes
/// checkpoints, pair pools, rounds.csv, summary.csv and (with an output dir)
/// the sweep and detector artifacts. With resume = true, restarts from the
/// last complete round found in the output directory.
CycleResult run_cycle(const ExperimentConfig& config, bool resume = false);

/// In-memory cycle without any file output; used by tests.
CycleResult run_cycle_in_memory(const ExperimentConfig& config);

enum class EvalMode { LeaveOneOut, AllReviewers };

struct EvalOutputs {
  std::vector<metrics::ProxyReport> proxy;
  std::optional<metrics::DecisionReport> decision;
};

/// Reads scores.csv and writes proxy_report.csv (and decision_report.csv
/// when any row carries both label and prediction) into out_dir.
EvalOutputs run_eval(const std::filesystem::path& scores_csv, EvalMode mode, std::uint64_t seed,
                     const std::filesystem::path& out_dir);
EvalOutputs evaluate_matrix(const metrics::ScoreMatrix& matrix, EvalMode mode, std::uint64_t seed);

/// Consolidates a run directory into plot_score_vs_round.csv, plot_sweep.csv
/// and plot_roc.csv. Throws MissingArtifact naming the first absent input.
std::vector<std::filesystem::path> emit_plot_data(const std::filesystem::path& run_dir);

// Artifact names inside a run directory.
inline constexpr const char* kRoundsCsv = "rounds.csv";
inline constexpr const char* kSummaryCsv = "summary.csv";
inline constexpr const char* kSweepCsv = "sweep.csv";
inline constexpr const char* kDetectScoresCsv = "detect_scores.csv";

}  // namespace rrcycle::harness
