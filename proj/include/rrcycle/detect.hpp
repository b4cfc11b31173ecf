#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rrcycle/policy.hpp"

namespace rrcycle::detect {

struct DetectorConfig {
  policy::PolicyParams scoring_model;
  double epsilon = 0.0;
  std::size_t min_length = 16;
};

struct CurvatureScore {
  double log_p = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double score = 0.0;  // (log_p - mu) / sigma
};

enum class Label { MachineGenerated, HumanWritten };

std::string_view to_string(Label label);

/// Analytic conditional probability curvature of the completion under the
/// scoring model. Per scored position j with predictive distribution p_j:
///   mu_j = sum_t p_j(t) log p_j(t),  v_j = sum_t p_j(t) log^2 p_j(t) - mu_j^2
/// and score = (sum_j log p_j(x_j) - sum_j mu_j) / sqrt(sum_j v_j).
/// Throws TooShort below min_length, DegenerateDistribution when sigma = 0.
CurvatureScore curvature(const DetectorConfig& config, const policy::Sequence& text);

// MachineGenerated iff score > epsilon.
Label classify(const CurvatureScore& score, double epsilon);
Label classify(double score, double epsilon);

/// Threshold maximizing accuracy among midpoints of consecutive distinct
/// observed scores (higher threshold on ties). Throws SingleClassInput.
double calibrate_scores(std::span<const double> machine, std::span<const double> human);

struct LabeledText {
  policy::Sequence text;
  Label label = Label::HumanWritten;
};

double calibrate(const DetectorConfig& config, std::span<const LabeledText> labeled);

struct DetectorReport {
  double accuracy = 0.0;
  double f1 = 0.0;  // MachineGenerated is the positive class
  // confusion[truth][pred], index 0 = MachineGenerated, 1 = HumanWritten
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::size_t excluded = 0;  // sequences shorter than min_length
};

// Accuracy/F1 from already computed scores at a threshold.
DetectorReport evaluate_scores(std::span<const double> machine, std::span<const double> human, double epsilon);

/// Scores both sets and classifies them at config.epsilon. Sequences below
/// min_length are excluded and counted.
DetectorReport eval_detector(const DetectorConfig& config, std::span<const policy::Sequence> machine_set,
                             std::span<const policy::Sequence> human_set);

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

// One point per distinct score (ascending), classifying score > threshold as machine.
std::vector<RocPoint> roc_curve(std::span<const double> machine, std::span<const double> human);

}  // namespace rrcycle::detect
