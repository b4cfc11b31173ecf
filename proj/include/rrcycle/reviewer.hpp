#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrcycle/common.hpp"
#include "rrcycle/corpus.hpp"
#include "rrcycle/policy.hpp"

namespace rrcycle::reviewer {

struct PanelConfig {
  int n_reviewers = 3;
  double noise_sigma = 0.5;
  double decision_threshold = 5.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AspectScores {
  int soundness = 1;
  int presentation = 1;
  int contribution = 1;

  friend bool operator==(const AspectScores&, const AspectScores&) = default;
};

struct ReviewerScore {
  double overall = 1.0;
  AspectScores aspects;

  friend bool operator==(const ReviewerScore&, const ReviewerScore&) = default;
};

struct PanelResult {
  std::vector<ReviewerScore> per_reviewer;  // ascending by overall
  double min = 0.0;
  double max = 0.0;
  double avg = 0.0;
  Decision decision = Decision::Reject;

  friend bool operator==(const PanelResult&, const PanelResult&) = default;
};

// Structure terms of the latent quality function.
struct StructureWeights {
  double intercept = 8.0;
  double loglik_slope = 2.0;  // multiplies the mean per-token gold log-likelihood
  std::size_t length_min = 8;
  std::size_t length_max = 16;
  double length_bonus = 1.0;
  std::vector<TokenId> markers;
  double marker_bonus = 0.75;  // per distinct marker present
};

/// Desk-scale stand-in for an expert judgment of a generated paper:
///   intercept + slope * mean_i log gold(y_i | x, y_<i)
///     + length_bonus * [length_min <= |y| <= length_max]
///     + marker_bonus * #(markers present in y)
/// clamped to [1, 10]. An empty completion scores 1.
double latent_quality(const policy::Sequence& seq, const policy::PolicyParams& gold,
                      const StructureWeights& weights);

// Monotone binning of an overall score onto the 1-4 aspect scale.
int aspect_bin(double overall);
AspectScores aspects_from_overall(double overall);

Decision decide(double avg, double threshold);

// Sorts the overall scores and derives min/max/avg, aspects and the decision.
PanelResult aggregate(std::vector<double> overalls, double threshold);

/// Each reviewer reports clamp(quality + N(0, sigma^2), 1, 10) with noise
/// drawn from derive_seed(panel.seed, reviewer index).
PanelResult score_paper(const PanelConfig& panel, const policy::Sequence& seq,
                        const policy::PolicyParams& gold, const StructureWeights& weights);

// A configured panel. `review` re-seeds the panel per paper so distinct
// papers get independent reviewer noise.
class ReviewerPanel {
 public:
  ReviewerPanel(PanelConfig config, policy::PolicyParams gold, StructureWeights weights);

  PanelResult review(const policy::Sequence& seq, std::uint64_t paper_seed) const;
  double quality(const policy::Sequence& seq) const;

  const PanelConfig& config() const { return config_; }
  const policy::PolicyParams& gold() const { return gold_; }
  const StructureWeights& weights() const { return weights_; }

 private:
  PanelConfig config_;
  policy::PolicyParams gold_;
  StructureWeights weights_;
};

// Fixed-template reviews carrying the numeric scores, in the corpus schema.
corpus::ReviewRecord to_review_record(const std::string& paper_id, const PanelResult& result);

}  // namespace rrcycle::reviewer
