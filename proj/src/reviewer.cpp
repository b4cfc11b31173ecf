#include "rrcycle/reviewer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rrcycle/rng.hpp"

namespace rrcycle::reviewer {

void PanelConfig::validate() const {
  if (n_reviewers < 1) throw Error(ErrorCode::InvalidArgument, "panel needs at least one reviewer");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw Error(ErrorCode::InvalidArgument, "noise_sigma must be nonnegative");
  if (!(decision_threshold >= 1.0 && decision_threshold <= 10.0))
    throw Error(ErrorCode::InvalidArgument, "decision_threshold must lie in [1, 10]");
}

double latent_quality(const policy::Sequence& seq, const policy::PolicyParams& gold,
                      const StructureWeights& weights) {
  if (seq.completion.empty()) return 1.0;
  const double mean_ll =
      policy::log_prob(gold, seq.prompt, seq.completion) / static_cast<double>(seq.length());
  double q = weights.intercept + weights.loglik_slope * mean_ll;
  if (seq.length() >= weights.length_min && seq.length() <= weights.length_max) q += weights.length_bonus;
  std::set<TokenId> present(seq.completion.begin(), seq.completion.end());
  std::set<TokenId> markers(weights.markers.begin(), weights.markers.end());
  for (TokenId m : markers)
    if (present.count(m)) q += weights.marker_bonus;
  return std::clamp(q, 1.0, 10.0);
}

int aspect_bin(double overall) {
  if (overall < 3.0) return 1;
  if (overall < 5.0) return 2;
  if (overall < 7.5) return 3;
  return 4;
}

AspectScores aspects_from_overall(double overall) {
  const int b = aspect_bin(overall);
  return {b, b, b};
}

Decision decide(double avg, double threshold) {
  return avg >= threshold ? Decision::Accept : Decision::Reject;
}

PanelResult aggregate(std::vector<double> overalls, double threshold) {
  if (overalls.empty()) throw Error(ErrorCode::InvalidArgument, "panel result needs at least one score");
  std::stable_sort(overalls.begin(), overalls.end());
  PanelResult r;
  for (double o : overalls) r.per_reviewer.push_back({o, aspects_from_overall(o)});
  r.min = overalls.front();
  r.max = overalls.back();
  r.avg = std::accumulate(overalls.begin(), overalls.end(), 0.0) / static_cast<double>(overalls.size());
  r.decision = decide(r.avg, threshold);
  return r;
}

PanelResult score_paper(const PanelConfig& panel, const policy::Sequence& seq,
                        const policy::PolicyParams& gold, const StructureWeights& weights) {
  panel.validate();
  const double q = latent_quality(seq, gold, weights);
  std::vector<double> overalls;
  overalls.reserve(static_cast<std::size_t>(panel.n_reviewers));
  for (int i = 0; i < panel.n_reviewers; ++i) {
    double noise = 0.0;
    if (panel.noise_sigma > 0.0) {
      Rng rng(derive_seed(panel.seed, {static_cast<std::uint64_t>(i)}));
      noise = rng.normal(0.0, panel.noise_sigma);
    }
    overalls.push_back(std::clamp(q + noise, 1.0, 10.0));
  }
  return aggregate(std::move(overalls), panel.decision_threshold);
}

ReviewerPanel::ReviewerPanel(PanelConfig config, policy::PolicyParams gold, StructureWeights weights)
    : config_(config), gold_(std::move(gold)), weights_(std::move(weights)) {
  config_.validate();
}

PanelResult ReviewerPanel::review(const policy::Sequence& seq, std::uint64_t paper_seed) const {
  PanelConfig per_paper = config_;
  per_paper.seed = derive_seed(config_.seed, {paper_seed});
  return score_paper(per_paper, seq, gold_, weights_);
}

double ReviewerPanel::quality(const policy::Sequence& seq) const {
  return latent_quality(seq, gold_, weights_);
}

corpus::ReviewRecord to_review_record(const std::string& paper_id, const PanelResult& result) {
  corpus::ReviewRecord rec;
  rec.paper_id = paper_id;
  for (std::size_t i = 0; i < result.per_reviewer.size(); ++i) {
    const auto& s = result.per_reviewer[i];
    const std::string tag = "Reviewer " + std::to_string(i + 1);
    corpus::Review rv;
    rv.summary = tag + ": simulated assessment, overall " + format_double(s.overall) + ".";
    rv.strengths = "Soundness " + std::to_string(s.aspects.soundness) + "/4.";
    rv.weaknesses = "Presentation " + std::to_string(s.aspects.presentation) + "/4.";
    rv.questions = "Contribution " + std::to_string(s.aspects.contribution) + "/4.";
    rv.soundness = s.aspects.soundness;
    rv.presentation = s.aspects.presentation;
    rv.contribution = s.aspects.contribution;
    rv.overall = s.overall;
    rec.reviews.push_back(std::move(rv));
  }
  rec.meta_review = "Average " + format_double(result.avg) + " (min " + format_double(result.min) +
                    ", max " + format_double(result.max) + ").";
  rec.decision = result.decision;
  return rec;
}

}  // namespace rrcycle::reviewer
