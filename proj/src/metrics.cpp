#include "rrcycle/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <cmath>
#include <numeric>
#include <ostream>

#include "rrcycle/csv.hpp"
#include "rrcycle/rng.hpp"

namespace rrcycle::metrics {

namespace {

double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw Error(ErrorCode::CsvSchema, "column '" + column + "': '" + cell + "' is not a number", line);
  return v;
}

std::optional<Decision> parse_label(const std::string& cell, std::size_t line, const std::string& column) {
  if (cell.empty()) return std::nullopt;
  auto d = parse_decision(cell);
  if (!d) throw Error(ErrorCode::CsvSchema, "column '" + column + "': '" + cell + "' is not Accept/Reject", line);
  return d;
}

// r_1, r_2, ... (r1 is accepted too)
bool is_reviewer_column(const std::string& name) {
  if (name.empty() || (name[0] != 'r' && name[0] != 'R')) return false;
  const std::size_t start = name.size() > 1 && name[1] == '_' ? 2 : 1;
  return name.size() > start &&
         std::all_of(name.begin() + start, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

double proxy_ground_truth(std::span<const double> scores, std::size_t held_out) {
  if (scores.size() < 2) throw Error(ErrorCode::PanelTooSmall, "proxy ground truth needs at least 2 scores");
  if (held_out >= scores.size()) throw Error(ErrorCode::InvalidArgument, "held-out index out of range");
  double sum = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != held_out) sum += scores[j];
  return sum / static_cast<double>(scores.size() - 1);
}

std::pair<double, double> proxy_errors(double r, double r_prime) {
  const double d = r - r_prime;
  return {d * d, std::abs(d)};
}

std::size_t held_out_index(const std::string& paper_id, std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {fnv1a64(paper_id)}));
  return rng.below(n);
}

ProxyReport evaluate_scores(const ScoreMatrix& matrix, ProxyMode mode, Subject subject, std::uint64_t seed) {
  if (mode == ProxyMode::AllReviewers && subject == Subject::Human)
    throw Error(ErrorCode::InvalidArgument, "the all-reviewer mode evaluates model scores only");
  ProxyReport report;
  report.mode = mode;
  report.subject = subject;
  std::vector<double> sq, ab;
  for (const auto& row : matrix) {
    if (row.human.size() < 2) {
      ++report.rows_dropped;
      continue;
    }
    if (subject == Subject::Model && !row.model_score)
      throw Error(ErrorCode::MissingModelScore, "row '" + row.paper_id + "' has no model_score");
    double target = 0.0;
    double evaluated = 0.0;
    if (mode == ProxyMode::AllReviewers) {
      target = mean(row.human);
      evaluated = *row.model_score;
    } else {
      const std::size_t i = held_out_index(row.paper_id, row.human.size(), seed);
      target = proxy_ground_truth(row.human, i);
      evaluated = subject == Subject::Human ? row.human[i] : *row.model_score;
    }
    auto [mse, mae] = proxy_errors(evaluated, target);
    sq.push_back(mse);
    ab.push_back(mae);
  }
  report.rows_used = sq.size();
  if (report.rows_used) {
    report.proxy_mse = sorted_sum(std::move(sq)) / static_cast<double>(report.rows_used);
    report.proxy_mae = sorted_sum(std::move(ab)) / static_cast<double>(report.rows_used);
  }
  return report;
}

DecisionReport decision_metrics(const ScoreMatrix& matrix) {
  DecisionReport r;
  for (const auto& row : matrix) {
    if (!row.label || !row.pred) continue;
    const int l = *row.label == Decision::Accept ? 0 : 1;
    const int p = *row.pred == Decision::Accept ? 0 : 1;
    ++r.confusion[l][p];
    ++r.rows_used;
  }
  if (r.rows_used == 0) throw Error(ErrorCode::NoLabeledRows, "no row carries both a label and a prediction");
  const auto& c = r.confusion;
  r.accuracy = static_cast<double>(c[0][0] + c[1][1]) / static_cast<double>(r.rows_used);
  auto f1 = [](std::size_t tp, std::size_t fp, std::size_t fn) {
    const std::size_t denom = 2 * tp + fp + fn;
    return tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };
  r.f1_accept = f1(c[0][0], c[1][0], c[0][1]);
  r.f1_reject = f1(c[1][1], c[0][1], c[1][0]);
  r.macro_f1 = (r.f1_accept + r.f1_reject) / 2.0;
  return r;
}

ScoreMatrix parse_scores_csv(std::string_view text) {
  const auto table = csv::parse(text);
  const std::size_t id_col = table.column("paper_id");
  if (id_col == std::string::npos) throw Error(ErrorCode::CsvSchema, "missing 'paper_id' column", 1);
  std::vector<std::size_t> reviewer_cols;
  for (std::size_t i = 0; i < table.header.size(); ++i)
    if (is_reviewer_column(table.header[i])) reviewer_cols.push_back(i);
  const std::size_t model_col = table.column("model_score");
  const std::size_t label_col = table.column("label");
  const std::size_t pred_col = table.column("pred");

  ScoreMatrix m;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    if (cells.size() > table.header.size())
      throw Error(ErrorCode::CsvSchema, "row has more cells than the header", line);
    auto cell = [&](std::size_t col) -> std::string {
      return col != std::string::npos && col < cells.size() ? cells[col] : std::string{};
    };
    ScoreRow row;
    row.paper_id = cell(id_col);
    if (row.paper_id.empty()) throw Error(ErrorCode::CsvSchema, "empty paper_id", line);
    for (std::size_t col : reviewer_cols)
      if (auto v = parse_number(cell(col), line, table.header[col])) {
        if (*v < 1.0 || *v > 10.0)
          throw Error(ErrorCode::CsvSchema, "reviewer score outside [1, 10]", line);
        row.human.push_back(*v);
      }
    row.model_score = parse_number(cell(model_col), line, "model_score");
    row.label = parse_label(cell(label_col), line, "label");
    row.pred = parse_label(cell(pred_col), line, "pred");
    m.push_back(std::move(row));
  }
  return m;
}

ScoreMatrix read_scores_csv(const std::filesystem::path& path) {
  const auto table_text = [&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  return parse_scores_csv(table_text);
}

std::string_view to_string(ProxyMode mode) {
  return mode == ProxyMode::LeaveOneOut ? "n_minus_1" : "n";
}

std::string_view to_string(Subject subject) { return subject == Subject::Human ? "human" : "model"; }

void write_proxy_report(std::ostream& out, std::span<const ProxyReport> reports) {
  csv::Writer w(out, "proxy_report", {"mode", "subject", "proxy_mse", "proxy_mae", "rows_used", "rows_dropped"});
  for (const auto& r : reports) {
    w.cell(to_string(r.mode)).cell(to_string(r.subject)).cell(r.proxy_mse).cell(r.proxy_mae);
    w.cell(r.rows_used).cell(r.rows_dropped);
    w.end_row();
  }
}

void write_decision_report(std::ostream& out, const DecisionReport& r) {
  csv::Writer w(out, "decision_report",
                {"accuracy", "macro_f1", "f1_accept", "f1_reject", "tp_accept", "fn_accept", "fp_accept",
                 "tn_accept", "rows_used"});
  w.cell(r.accuracy).cell(r.macro_f1).cell(r.f1_accept).cell(r.f1_reject);
  w.cell(r.confusion[0][0]).cell(r.confusion[0][1]).cell(r.confusion[1][0]).cell(r.confusion[1][1]);
  w.cell(r.rows_used);
  w.end_row();
}

}  // namespace rrcycle::metrics
