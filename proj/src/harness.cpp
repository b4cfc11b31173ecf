#include "rrcycle/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "rrcycle/csv.hpp"
#include "rrcycle/rejection.hpp"
#include "rrcycle/rng.hpp"

namespace rrcycle::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum SeedStream : std::uint64_t {
  kSimpoSeed = 1,
  kPanelSeed = 2,
  kEvalSeed = 3,
  kCorpusSeed = 4,
  kTeacherSeed = 5,
  kSweepSeed = 6,
  kDetectSeed = 7,
};

std::uint64_t stream_seed(const ExperimentConfig& c, SeedStream s) { return derive_seed(c.global_seed, {s}); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, path.string() + ": " + e.what());
  }
}

fs::path checkpoint_path(const fs::path& dir, int round) {
  return dir / "checkpoints" / ("policy_round_" + std::to_string(round) + ".json");
}

fs::path state_path(const fs::path& dir, int round) {
  return dir / "checkpoints" / ("state_round_" + std::to_string(round) + ".json");
}

json report_to_json(const simpo::RoundReport& r) {
  return {{"round", r.round},          {"pairs_built", r.pairs_built}, {"pairs_skipped", r.pairs_skipped},
          {"pairs_trained", r.pairs_trained}, {"mean_score", r.mean_score}, {"loss", r.loss}};
}

simpo::RoundReport report_from_json(const json& j) {
  simpo::RoundReport r;
  r.round = j.at("round").get<int>();
  r.pairs_built = j.at("pairs_built").get<std::size_t>();
  r.pairs_skipped = j.at("pairs_skipped").get<std::size_t>();
  r.pairs_trained = j.at("pairs_trained").get<std::size_t>();
  r.mean_score = j.at("mean_score").get<double>();
  r.loss = j.at("loss").get<double>();
  return r;
}

// Resumable state after a complete round (or after SFT for round 0).
struct Snapshot {
  simpo::IterationState state;
  std::vector<PolicyScore> stage_scores;
};

json snapshot_to_json(const Snapshot& s) {
  json scores = json::array();
  for (const auto& p : s.stage_scores) scores.push_back({{"mean_score", p.mean_score}, {"accept_rate", p.accept_rate}});
  json reports = json::array();
  for (const auto& r : s.state.reports) reports.push_back(report_to_json(r));
  return {{"round", s.state.round},
          {"params", policy::to_json(s.state.params)},
          {"score_history", s.state.score_history},
          {"reports", reports},
          {"stage_scores", scores}};
}

Snapshot snapshot_from_json(const json& j) {
  try {
    Snapshot s;
    s.state.round = j.at("round").get<int>();
    s.state.params = policy::params_from_json(j.at("params"));
    s.state.score_history = j.at("score_history").get<std::vector<double>>();
    for (const auto& r : j.at("reports")) s.state.reports.push_back(report_from_json(r));
    for (const auto& p : j.at("stage_scores"))
      s.stage_scores.push_back({p.at("mean_score").get<double>(), p.at("accept_rate").get<double>()});
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("cycle state: ") + e.what());
  }
}

void write_rounds_csv(const fs::path& path, const std::vector<simpo::RoundReport>& reports) {
  std::ostringstream out;
  csv::Writer w(out, "rounds", {"round", "pairs_built", "pairs_skipped", "mean_score", "loss", "pairs_trained"});
  for (const auto& r : reports) {
    w.cell(r.round).cell(r.pairs_built).cell(r.pairs_skipped).cell(r.mean_score).cell(r.loss).cell(r.pairs_trained);
    w.end_row();
  }
  write_text(path, out.str());
}

void write_summary_csv(const fs::path& path, const std::vector<PolicyScore>& scores) {
  std::ostringstream out;
  csv::Writer w(out, "summary", {"round", "policy", "mean_score", "accept_rate"});
  for (std::size_t t = 0; t < scores.size(); ++t) {
    w.cell(t).cell("P" + std::to_string(t + 1)).cell(scores[t].mean_score).cell(scores[t].accept_rate);
    w.end_row();
  }
  write_text(path, out.str());
}

void run_final_sweep(const ExperimentConfig& config, const Setup& setup, const policy::PolicyParams& params,
                     const fs::path& dir) {
  policy::SamplerConfig sampler;
  sampler.temperature = config.evaluation.temperature;
  sampler.max_len = config.task.max_len;
  const auto result = rejection::sweep(rejection::policy_generator(params, sampler),
                                       rejection::panel_scorer(setup.panel), setup.task.eval_prompts,
                                       config.evaluation.sweep_ns, config.evaluation.sweep_trials,
                                       stream_seed(config, kSweepSeed));
  std::ostringstream out;
  rejection::write_sweep_csv(out, result);
  write_text(dir / kSweepCsv, out.str());
}

void run_final_detection(const ExperimentConfig& config, const Setup& setup, const policy::PolicyParams& params,
                         const fs::path& dir) {
  const auto& ev = config.evaluation;
  const std::uint64_t seed = stream_seed(config, kDetectSeed);
  const auto other = policy::PolicyParams::random(setup.task.vocab, config.task.order, ev.detect_other_scale,
                                                  derive_seed(seed, {0}));
  auto draw = [&](const policy::PolicyParams& source, std::uint64_t stream) {
    std::vector<policy::Sequence> out;
    for (std::size_t i = 0; i < ev.detect_samples; ++i) {
      policy::SamplerConfig sc;
      sc.temperature = 1.0;
      sc.max_len = ev.detect_length;
      sc.stop_at_terminator = false;
      sc.seed = derive_seed(seed, {stream, i});
      out.push_back(policy::sample(source, {}, sc));
    }
    return out;
  };
  detect::DetectorConfig dc{params, 0.0, config.detector.min_length};
  if (config.detector.epsilon) {
    dc.epsilon = *config.detector.epsilon;
  } else {
    std::vector<double> m, h;
    for (const auto& s : draw(params, 1)) m.push_back(detect::curvature(dc, s).score);
    for (const auto& s : draw(other, 2)) h.push_back(detect::curvature(dc, s).score);
    dc.epsilon = detect::calibrate_scores(m, h);
  }
  const auto machine = draw(params, 3);
  const auto human = draw(other, 4);

  std::ostringstream out;
  csv::Writer w(out, "detect_scores", {"id", "truth", "log_p", "mu", "sigma", "score", "label"});
  std::vector<double> ms, hs;
  auto emit = [&](const std::vector<policy::Sequence>& set, detect::Label truth, std::vector<double>& scores) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto s = detect::curvature(dc, set[i]);
      scores.push_back(s.score);
      w.cell(std::string(detect::to_string(truth)) + "-" + std::to_string(i)).cell(detect::to_string(truth));
      w.cell(s.log_p).cell(s.mu).cell(s.sigma).cell(s.score).cell(detect::to_string(detect::classify(s, dc.epsilon)));
      w.end_row();
    }
  };
  emit(machine, detect::Label::MachineGenerated, ms);
  emit(human, detect::Label::HumanWritten, hs);
  write_text(dir / kDetectScoresCsv, out.str());

  const auto report = detect::evaluate_scores(ms, hs, dc.epsilon);
  std::ostringstream rep;
  csv::Writer rw(rep, "detect_report", {"epsilon", "accuracy", "f1", "tp", "fn", "fp", "tn", "excluded"});
  rw.cell(dc.epsilon).cell(report.accuracy).cell(report.f1);
  rw.cell(report.confusion[0][0]).cell(report.confusion[0][1]).cell(report.confusion[1][0]).cell(report.confusion[1][1]);
  rw.cell(report.excluded);
  rw.end_row();
  write_text(dir / "detect_report.csv", rep.str());
}

CycleResult cycle_impl(const ExperimentConfig& config, const fs::path* dir, bool resume) {
  config.validate();
  const Setup setup = make_setup(config);
  const std::uint64_t eval_seed = stream_seed(config, kEvalSeed);
  auto score = [&](const policy::PolicyParams& p) {
    return evaluate_policy(p, setup.panel, setup.task.eval_prompts, config.evaluation, config.task.max_len, eval_seed);
  };

  Snapshot snap;
  bool restored = false;
  if (dir && resume) {
    for (int r = config.simpo.rounds; r >= 0; --r) {
      if (fs::exists(state_path(*dir, r))) {
        snap = snapshot_from_json(read_json_file(state_path(*dir, r)));
        restored = true;
        break;
      }
    }
  }
  if (!restored) {
    snap.state.round = 1;
    snap.state.params = train_sft(config, setup);
    snap.stage_scores.push_back(score(snap.state.params));
    if (dir) {
      policy::save_checkpoint(checkpoint_path(*dir, 0), snap.state.params);
      write_text(state_path(*dir, 0), snapshot_to_json(snap).dump() + "\n");
    }
  }

  while (snap.state.round <= config.simpo.rounds) {
    const int round = snap.state.round;
    try {
      snap.state = simpo::iterate(std::move(snap.state), setup.panel, setup.task.prompts, config.simpo);
    } catch (const Error& e) {
      throw Error(e.code(), "round " + std::to_string(round) + ": " + e.what());
    }
    snap.stage_scores.push_back(score(snap.state.params));
    if (dir) {
      std::ostringstream pairs;
      for (const auto& p : snap.state.pair_pool) pairs << simpo::to_json(p, setup.task.vocab).dump() << '\n';
      write_text(*dir / ("pairs_round_" + std::to_string(round) + ".jsonl"), pairs.str());
      policy::save_checkpoint(checkpoint_path(*dir, round), snap.state.params);
      write_text(state_path(*dir, round), snapshot_to_json(snap).dump() + "\n");
    }
  }

  CycleResult result{snap.state.params, snap.stage_scores, snap.state.reports};
  if (dir) {
    write_rounds_csv(*dir / kRoundsCsv, result.reports);
    write_summary_csv(*dir / kSummaryCsv, result.stage_scores);
    run_final_sweep(config, setup, result.final_params, *dir);
    run_final_detection(config, setup, result.final_params, *dir);
  }
  return result;
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  auto it = j.find(key);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw Error(ErrorCode::SchemaViolation, std::string("config section '") + key + "' must be an object");
  return *it;
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::derive_seeds() {
  simpo.seed = stream_seed(*this, kSimpoSeed);
  panel.seed = stream_seed(*this, kPanelSeed);
  simpo.max_len = task.max_len;
}

void ExperimentConfig::validate() const {
  simpo.validate();
  panel.validate();
  if (task.max_len < 1) throw Error(ErrorCode::InvalidArgument, "task max_len must be >= 1");
  if (evaluation.samples_per_prompt < 1) throw Error(ErrorCode::InvalidArgument, "evaluation needs samples_per_prompt >= 1");
  if (!(evaluation.temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "evaluation temperature must be positive");
  if (detector.min_length < 1) throw Error(ErrorCode::InvalidArgument, "detector min_length must be >= 1");
  if (evaluation.detect_samples < 1 || evaluation.detect_length < detector.min_length)
    throw Error(ErrorCode::InvalidArgument, "detector experiment needs samples >= 1 and length >= min_length");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.derive_seeds();
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "config must be a JSON object");
  static const std::vector<std::string> known{"task", "simpo", "panel", "detector", "evaluation", "output_dir", "global_seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw Error(ErrorCode::SchemaViolation, "unknown config key '" + it.key() + "'");

  ExperimentConfig c;
  try {
    c.task = fixture::task_config_from_json(section(j, "task"));
    c.simpo = simpo::simpo_config_from_json(section(j, "simpo"));
    const auto& panel = section(j, "panel");
    c.panel.n_reviewers = panel.value("n_reviewers", c.panel.n_reviewers);
    c.panel.noise_sigma = panel.value("noise_sigma", c.panel.noise_sigma);
    c.panel.decision_threshold = panel.value("decision_threshold", c.panel.decision_threshold);
    const auto& det = section(j, "detector");
    if (det.contains("epsilon") && !det["epsilon"].is_null()) c.detector.epsilon = det["epsilon"].get<double>();
    c.detector.min_length = det.value("min_length", c.detector.min_length);
    const auto& ev = section(j, "evaluation");
    c.evaluation.samples_per_prompt = ev.value("samples_per_prompt", c.evaluation.samples_per_prompt);
    c.evaluation.temperature = ev.value("temperature", c.evaluation.temperature);
    c.evaluation.sweep_ns = ev.value("sweep_ns", c.evaluation.sweep_ns);
    c.evaluation.sweep_trials = ev.value("sweep_trials", c.evaluation.sweep_trials);
    c.evaluation.detect_samples = ev.value("detect_samples", c.evaluation.detect_samples);
    c.evaluation.detect_length = ev.value("detect_length", c.evaluation.detect_length);
    c.evaluation.detect_other_scale = ev.value("detect_other_scale", c.evaluation.detect_other_scale);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.global_seed = j.value("global_seed", c.global_seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("config: ") + e.what());
  }
  c.derive_seeds();
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["task"] = fixture::to_json(c.task);
  j["simpo"] = simpo::to_json(c.simpo);
  j["panel"] = {{"n_reviewers", c.panel.n_reviewers},
                {"noise_sigma", c.panel.noise_sigma},
                {"decision_threshold", c.panel.decision_threshold}};
  j["detector"] = {{"epsilon", c.detector.epsilon ? json(*c.detector.epsilon) : json(nullptr)},
                   {"min_length", c.detector.min_length}};
  j["evaluation"] = {{"samples_per_prompt", c.evaluation.samples_per_prompt},
                     {"temperature", c.evaluation.temperature},
                     {"sweep_ns", c.evaluation.sweep_ns},
                     {"sweep_trials", c.evaluation.sweep_trials},
                     {"detect_samples", c.evaluation.detect_samples},
                     {"detect_length", c.evaluation.detect_length},
                     {"detect_other_scale", c.evaluation.detect_other_scale}};
  j["output_dir"] = c.output_dir.string();
  j["global_seed"] = c.global_seed;
  return j;
}

ExperimentConfig load_config(const fs::path& path) {
  auto config = config_from_json(read_json_file(path));
  if (const char* env = std::getenv("RRCYCLE_OUTPUT_DIR"); env && *env) config.output_dir = env;
  return config;
}

Setup make_setup(const ExperimentConfig& config) {
  auto task = fixture::build_task(config.task, stream_seed(config, kTeacherSeed));
  reviewer::ReviewerPanel panel(config.panel, task.gold, task.weights);
  auto sft_data = fixture::sft_corpus(task, config.task, stream_seed(config, kCorpusSeed));
  policy::PolicyParams initial(task.vocab, config.task.order, config.global_seed);
  return Setup{std::move(task), std::move(panel), std::move(sft_data), std::move(initial)};
}

PolicyScore evaluate_policy(const policy::PolicyParams& params, const reviewer::ReviewerPanel& panel,
                            std::span<const std::vector<TokenId>> prompts, const EvaluationConfig& eval,
                            std::size_t max_len, std::uint64_t seed) {
  double total = 0.0;
  std::size_t accepted = 0, n = 0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (int j = 0; j < eval.samples_per_prompt; ++j) {
      policy::SamplerConfig sc;
      sc.temperature = eval.temperature;
      sc.max_len = max_len;
      sc.seed = derive_seed(seed, {p, static_cast<std::uint64_t>(j), 0});
      const auto seq = policy::sample(params, prompts[p], sc);
      const auto result = panel.review(seq, derive_seed(seed, {p, static_cast<std::uint64_t>(j), 1}));
      total += result.avg;
      accepted += result.decision == Decision::Accept;
      ++n;
    }
  }
  if (n == 0) return {};
  return {total / static_cast<double>(n), static_cast<double>(accepted) / static_cast<double>(n)};
}

policy::PolicyParams train_sft(const ExperimentConfig& config, const Setup& setup, std::vector<double>* loss_trace) {
  return policy::sft_train(setup.initial, setup.sft_data, config.task.sft_epochs, config.task.sft_lr, loss_trace);
}

CycleResult run_cycle(const ExperimentConfig& config, bool resume) {
  fs::create_directories(config.output_dir / "checkpoints");
  if (config.simpo.rounds == 0) {
    // Nothing to iterate: the SFT checkpoint is the whole run.
    config.validate();
    const Setup setup = make_setup(config);
    CycleResult result;
    result.final_params = train_sft(config, setup);
    result.stage_scores.push_back(evaluate_policy(result.final_params, setup.panel, setup.task.eval_prompts,
                                                  config.evaluation, config.task.max_len,
                                                  stream_seed(config, kEvalSeed)));
    policy::save_checkpoint(checkpoint_path(config.output_dir, 0), result.final_params);
    return result;
  }
  write_text(config.output_dir / "config.json", to_json(config).dump(2) + "\n");
  return cycle_impl(config, &config.output_dir, resume);
}

CycleResult run_cycle_in_memory(const ExperimentConfig& config) { return cycle_impl(config, nullptr, false); }

// ---------------------------------------------------------------------------

EvalOutputs evaluate_matrix(const metrics::ScoreMatrix& matrix, EvalMode mode, std::uint64_t seed) {
  EvalOutputs out;
  const bool any_model = std::any_of(matrix.begin(), matrix.end(), [](const auto& r) { return r.model_score.has_value(); });
  if (mode == EvalMode::LeaveOneOut) {
    out.proxy.push_back(metrics::evaluate_scores(matrix, metrics::ProxyMode::LeaveOneOut, metrics::Subject::Human, seed));
    if (any_model)
      out.proxy.push_back(metrics::evaluate_scores(matrix, metrics::ProxyMode::LeaveOneOut, metrics::Subject::Model, seed));
  } else {
    out.proxy.push_back(metrics::evaluate_scores(matrix, metrics::ProxyMode::AllReviewers, metrics::Subject::Model, seed));
  }
  if (std::any_of(matrix.begin(), matrix.end(), [](const auto& r) { return r.label && r.pred; }))
    out.decision = metrics::decision_metrics(matrix);
  return out;
}

EvalOutputs run_eval(const fs::path& scores_csv, EvalMode mode, std::uint64_t seed, const fs::path& out_dir) {
  const auto matrix = metrics::read_scores_csv(scores_csv);
  auto out = evaluate_matrix(matrix, mode, seed);
  fs::create_directories(out_dir);
  std::ostringstream proxy;
  metrics::write_proxy_report(proxy, out.proxy);
  write_text(out_dir / "proxy_report.csv", proxy.str());
  if (out.decision) {
    std::ostringstream dec;
    metrics::write_decision_report(dec, *out.decision);
    write_text(out_dir / "decision_report.csv", dec.str());
  }
  return out;
}

std::vector<fs::path> emit_plot_data(const fs::path& run_dir) {
  for (const char* name : {kSummaryCsv, kSweepCsv, kDetectScoresCsv})
    if (!fs::exists(run_dir / name))
      throw Error(ErrorCode::MissingArtifact, (run_dir / name).string() + " not found");

  auto need = [](const csv::Table& t, const char* col, const fs::path& file) {
    const std::size_t i = t.column(col);
    if (i == std::string::npos) throw Error(ErrorCode::CsvSchema, file.string() + ": missing column '" + col + "'");
    return i;
  };
  auto number = [](const std::string& s) { return std::stod(s); };
  std::vector<fs::path> written;

  {
    const auto src = run_dir / kSummaryCsv;
    const auto t = csv::read_file(src);
    const auto round = need(t, "round", src), score = need(t, "mean_score", src), acc = need(t, "accept_rate", src);
    std::ostringstream out;
    csv::Writer w(out, "plot_score_vs_round", {"round", "mean_score", "accept_rate"});
    for (const auto& r : t.rows) {
      w.cell(r.at(round)).cell(r.at(score)).cell(r.at(acc));
      w.end_row();
    }
    written.push_back(run_dir / "plot_score_vs_round.csv");
    write_text(written.back(), out.str());
  }
  {
    const auto src = run_dir / kSweepCsv;
    const auto t = csv::read_file(src);
    const std::vector<const char*> cols{"N", "avg_of_best", "avg_max", "avg_min", "avg_worst"};
    std::vector<std::size_t> idx;
    for (const char* c : cols) idx.push_back(need(t, c, src));
    std::ostringstream out;
    csv::Writer w(out, "plot_sweep", {cols.begin(), cols.end()});
    for (const auto& r : t.rows) {
      for (std::size_t i : idx) w.cell(r.at(i));
      w.end_row();
    }
    written.push_back(run_dir / "plot_sweep.csv");
    write_text(written.back(), out.str());
  }
  {
    const auto src = run_dir / kDetectScoresCsv;
    const auto t = csv::read_file(src);
    const auto truth = need(t, "truth", src), score = need(t, "score", src);
    std::vector<double> m, h;
    for (const auto& r : t.rows) (r.at(truth) == "machine" ? m : h).push_back(number(r.at(score)));
    std::ostringstream out;
    csv::Writer w(out, "plot_roc", {"threshold", "tpr", "fpr"});
    for (const auto& p : detect::roc_curve(m, h)) {
      w.cell(p.threshold).cell(p.tpr).cell(p.fpr);
      w.end_row();
    }
    written.push_back(run_dir / "plot_roc.csv");
    write_text(written.back(), out.str());
  }
  return written;
}

}  // namespace rrcycle::harness
