#include "rrcycle/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rrcycle::detect {

std::string_view to_string(Label label) {
  return label == Label::MachineGenerated ? "machine" : "human";
}

CurvatureScore curvature(const DetectorConfig& config, const policy::Sequence& text) {
  const auto& model = config.scoring_model;
  if (text.length() < std::max<std::size_t>(config.min_length, 1))
    throw Error(ErrorCode::TooShort, "sequence of " + std::to_string(text.length()) +
                                         " tokens is below the minimum of " +
                                         std::to_string(config.min_length));
  for (TokenId id : text.completion)
    if (id >= model.vocab_size()) throw Error(ErrorCode::TokenOutOfRange, "token id out of range");

  std::vector<TokenId> ctx(text.prompt.begin(), text.prompt.end());
  std::vector<double> lp(model.vocab_size());
  CurvatureScore s;
  double var = 0.0;
  for (TokenId tok : text.completion) {
    policy::log_softmax(model.row(model.state_index(ctx)), lp);
    double m1 = 0.0;
    for (double l : lp)
      if (!std::isinf(l)) m1 += std::exp(l) * l;  // p = 0 contributes nothing
    // Centered form of E[l^2] - E[l]^2; exact zero for uniform rows up to rounding.
    double v = 0.0;
    for (double l : lp)
      if (!std::isinf(l)) v += std::exp(l) * (l - m1) * (l - m1);
    s.log_p += lp[tok];
    s.mu += m1;
    var += v;
    ctx.push_back(tok);
  }
  s.sigma = std::sqrt(var);
  // Relative guard: a uniform or one-hot conditional leaves only rounding noise.
  if (!(s.sigma > 1e-12 * std::max(1.0, std::abs(s.mu))) || !std::isfinite(s.log_p))
    throw Error(ErrorCode::DegenerateDistribution, "predictive distributions have zero log-probability variance");
  s.score = (s.log_p - s.mu) / s.sigma;
  return s;
}

Label classify(double score, double epsilon) {
  return score > epsilon ? Label::MachineGenerated : Label::HumanWritten;
}

Label classify(const CurvatureScore& score, double epsilon) { return classify(score.score, epsilon); }

DetectorReport evaluate_scores(std::span<const double> machine, std::span<const double> human, double epsilon) {
  DetectorReport r;
  for (double s : machine) ++r.confusion[0][classify(s, epsilon) == Label::MachineGenerated ? 0 : 1];
  for (double s : human) ++r.confusion[1][classify(s, epsilon) == Label::MachineGenerated ? 0 : 1];
  const auto& c = r.confusion;
  const std::size_t total = c[0][0] + c[0][1] + c[1][0] + c[1][1];
  if (total == 0) return r;
  r.accuracy = static_cast<double>(c[0][0] + c[1][1]) / static_cast<double>(total);
  const std::size_t denom = 2 * c[0][0] + c[0][1] + c[1][0];
  r.f1 = c[0][0] == 0 ? 0.0 : 2.0 * static_cast<double>(c[0][0]) / static_cast<double>(denom);
  return r;
}

double calibrate_scores(std::span<const double> machine, std::span<const double> human) {
  if (machine.empty() || human.empty())
    throw Error(ErrorCode::SingleClassInput, "calibration needs both machine and human examples");
  std::vector<double> all(machine.begin(), machine.end());
  all.insert(all.end(), human.begin(), human.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  if (all.size() == 1) return all.front();

  std::vector<double> m(machine.begin(), machine.end()), h(human.begin(), human.end());
  std::sort(m.begin(), m.end());
  std::sort(h.begin(), h.end());
  double best_eps = 0.0;
  std::size_t best_correct = 0;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    const double eps = all[i] + (all[i + 1] - all[i]) / 2.0;
    // machine above eps plus human at or below eps
    const auto m_above = static_cast<std::size_t>(m.end() - std::upper_bound(m.begin(), m.end(), eps));
    const auto h_below = static_cast<std::size_t>(std::upper_bound(h.begin(), h.end(), eps) - h.begin());
    const std::size_t correct = m_above + h_below;
    if (correct >= best_correct) {
      best_correct = correct;
      best_eps = eps;
    }
  }
  return best_eps;
}

double calibrate(const DetectorConfig& config, std::span<const LabeledText> labeled) {
  std::vector<double> machine, human;
  for (const auto& item : labeled)
    (item.label == Label::MachineGenerated ? machine : human).push_back(curvature(config, item.text).score);
  return calibrate_scores(machine, human);
}

DetectorReport eval_detector(const DetectorConfig& config, std::span<const policy::Sequence> machine_set,
                             std::span<const policy::Sequence> human_set) {
  if (machine_set.empty() || human_set.empty())
    throw Error(ErrorCode::SingleClassInput, "detector evaluation needs both sets nonempty");
  std::size_t excluded = 0;
  auto score_all = [&](std::span<const policy::Sequence> set) {
    std::vector<double> out;
    for (const auto& seq : set) {
      try {
        out.push_back(curvature(config, seq).score);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TooShort) throw;
        ++excluded;
      }
    }
    return out;
  };
  const auto m = score_all(machine_set);
  const auto h = score_all(human_set);
  auto report = evaluate_scores(m, h, config.epsilon);
  report.excluded = excluded;
  return report;
}

std::vector<RocPoint> roc_curve(std::span<const double> machine, std::span<const double> human) {
  std::vector<double> thresholds(machine.begin(), machine.end());
  thresholds.insert(thresholds.end(), human.begin(), human.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.insert(thresholds.begin(), -std::numeric_limits<double>::infinity());

  std::vector<double> m(machine.begin(), machine.end()), h(human.begin(), human.end());
  std::sort(m.begin(), m.end());
  std::sort(h.begin(), h.end());
  std::vector<RocPoint> roc;
  for (double t : thresholds) {
    const auto m_above = m.end() - std::upper_bound(m.begin(), m.end(), t);
    const auto h_above = h.end() - std::upper_bound(h.begin(), h.end(), t);
    roc.push_back({t, m.empty() ? 0.0 : static_cast<double>(m_above) / static_cast<double>(m.size()),
                   h.empty() ? 0.0 : static_cast<double>(h_above) / static_cast<double>(h.size())});
  }
  return roc;
}

}  // namespace rrcycle::detect
