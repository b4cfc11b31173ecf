#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rrcycle/common.hpp"

namespace rrcycle::metrics {

struct ScoreRow {
  std::string paper_id;
  std::vector<double> human;  // r_1 .. r_n
  std::optional<double> model_score;
  std::optional<Decision> label;
  std::optional<Decision> pred;
};

using ScoreMatrix = std::vector<ScoreRow>;

enum class ProxyMode {
  LeaveOneOut,   // "Reviewer = n-1": target is the mean of the other reviewers
  AllReviewers,  // "Reviewer = n": model score against the mean of all reviewers
};

// Which score is evaluated against the proxy target.
enum class Subject { Human, Model };

struct ProxyReport {
  double proxy_mse = 0.0;
  double proxy_mae = 0.0;
  ProxyMode mode = ProxyMode::LeaveOneOut;
  Subject subject = Subject::Model;
  std::size_t rows_used = 0;
  std::size_t rows_dropped = 0;  // rows with fewer than two human scores
};

struct DecisionReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double f1_accept = 0.0;
  double f1_reject = 0.0;
  // confusion[label][pred], index 0 = Accept, 1 = Reject
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::size_t rows_used = 0;
};

/// Mean of R without r_i. Throws PanelTooSmall if |R| < 2.
double proxy_ground_truth(std::span<const double> scores, std::size_t held_out);

// ((r - r')^2, |r - r'|)
std::pair<double, double> proxy_errors(double r, double r_prime);

// Uniformly chosen reviewer index for a row, determined by (seed, paper_id)
// so that it does not depend on row order.
std::size_t held_out_index(const std::string& paper_id, std::size_t n, std::uint64_t seed);

/// Proxy MSE/MAE over the matrix.
///   LeaveOneOut + Human: held-out reviewer score vs mean of the others.
///   LeaveOneOut + Model: model score vs mean of the non-held-out reviewers.
///   AllReviewers + Model: model score vs mean of all reviewers.
/// AllReviewers + Human is rejected (InvalidArgument). Model subjects throw
/// MissingModelScore naming the row. Rows with |R| < 2 are dropped and counted.
/// Per-row terms are summed in sorted order, so the report does not depend on row order.
ProxyReport evaluate_scores(const ScoreMatrix& matrix, ProxyMode mode, Subject subject,
                            std::uint64_t seed = 0);

/// Accuracy and macro F1 over {Accept, Reject} for rows carrying both a label
/// and a prediction. A class with no true positives gets F1 = 0.
/// Throws NoLabeledRows.
DecisionReport decision_metrics(const ScoreMatrix& matrix);

// scores.csv: paper_id, r_1..r_k, model_score, label, pred. Reviewer columns
// are any header named r<digits>; empty cells mean absent. CsvSchema errors
// carry the 1-based line number.
ScoreMatrix parse_scores_csv(std::string_view text);
ScoreMatrix read_scores_csv(const std::filesystem::path& path);

void write_proxy_report(std::ostream& out, std::span<const ProxyReport> reports);
void write_decision_report(std::ostream& out, const DecisionReport& report);

std::string_view to_string(ProxyMode mode);
std::string_view to_string(Subject subject);

}  // namespace rrcycle::metrics
