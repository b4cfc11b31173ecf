#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "rrcycle/corpus.hpp"
#include "rrcycle/csv.hpp"
#include "rrcycle/detect.hpp"
#include "rrcycle/harness.hpp"
#include "rrcycle/rejection.hpp"
#include "rrcycle/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rrcycle;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

json parse_json(const std::string& text, const std::string& where, std::size_t line = 0) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, where + ": " + e.what(), line);
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<json> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_json(line, path.string(), n));
  }
  return out;
}

// "tokens": [symbols or ids] or "text": "sym sym ...".
std::vector<TokenId> tokens_of(const json& j, const policy::Vocabulary& vocab) {
  if (j.is_string()) return vocab.encode(j.get<std::string>());
  if (!j.is_array()) throw Error(ErrorCode::SchemaViolation, "token list must be a string or an array");
  std::vector<TokenId> ids;
  for (const auto& t : j) {
    if (t.is_number_unsigned()) {
      const auto id = t.get<std::uint64_t>();
      if (id >= vocab.size()) throw Error(ErrorCode::TokenOutOfRange, "token id " + std::to_string(id));
      ids.push_back(static_cast<TokenId>(id));
    } else if (t.is_string()) {
      const auto one = vocab.encode(t.get<std::string>());
      ids.insert(ids.end(), one.begin(), one.end());
    } else {
      throw Error(ErrorCode::SchemaViolation, "tokens must be symbols or non-negative ids");
    }
  }
  return ids;
}

struct InputText {
  std::string id;
  policy::Sequence seq;
  std::optional<detect::Label> truth;
};

std::vector<InputText> read_sequences(const fs::path& path, const policy::Vocabulary& vocab) {
  std::vector<InputText> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
      throw Error(ErrorCode::SchemaViolation, "record needs a string 'id'", line);
    InputText t;
    t.id = j["id"].get<std::string>();
    if (j.contains("prompt")) t.seq.prompt = tokens_of(j["prompt"], vocab);
    if (j.contains("tokens"))
      t.seq.completion = tokens_of(j["tokens"], vocab);
    else if (j.contains("text"))
      t.seq.completion = tokens_of(j["text"], vocab);
    else
      throw Error(ErrorCode::SchemaViolation, "record '" + t.id + "' has neither 'tokens' nor 'text'", line);
    if (j.contains("truth")) {
      const auto v = j["truth"].get<std::string>();
      if (v == "machine") t.truth = detect::Label::MachineGenerated;
      else if (v == "human") t.truth = detect::Label::HumanWritten;
      else throw Error(ErrorCode::SchemaViolation, "truth must be 'machine' or 'human'", line);
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* app, bool with_config = true) {
    if (with_config) app->add_option("--config", config, "experiment config JSON")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "global seed override");
    app->add_option("--out", out, "output directory");
  }

  harness::ExperimentConfig load() const {
    auto c = config.empty() ? harness::default_config() : harness::load_config(config);
    if (seed) c.global_seed = *seed;
    if (!out.empty()) c.output_dir = out;
    c.derive_seeds();
    c.validate();
    return c;
  }
};

policy::PolicyParams policy_for(const harness::ExperimentConfig& c, const std::string& checkpoint,
                                const harness::Setup& setup) {
  if (!checkpoint.empty()) return policy::load_checkpoint(checkpoint);
  return harness::train_sft(c, setup);
}

// --- subcommands -----------------------------------------------------------

struct IngestArgs {
  Common common;
  std::string manifest, abstracts;
  int cutoff = 0;
};

void cmd_ingest(const IngestArgs& a) {
  const fs::path manifest_path = a.manifest;
  const fs::path base = manifest_path.parent_path();
  const json manifest = parse_json(read_text(manifest_path), manifest_path.string());
  if (!manifest.contains("documents") || !manifest["documents"].is_array())
    throw Error(ErrorCode::SchemaViolation, "manifest needs a 'documents' array");

  corpus::FixtureAbstractSource source;
  if (!a.abstracts.empty()) source = corpus::FixtureAbstractSource::load(a.abstracts);

  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::vector<corpus::PaperRecord> records;
  std::size_t misses = 0, dropped = 0;
  for (const auto& d : manifest["documents"]) {
    try {
      corpus::RawLatexDoc doc;
      doc.source_path = d.at("source_path").get<std::string>();
      doc.text = read_text(resolve(doc.source_path));
      doc.year = d.at("year").get<int>();
      doc.venue = d.at("venue").get<std::string>();
      doc.id = d.value("id", std::string{});
      corpus::IngestOptions opt;
      if (d.contains("title")) opt.title = d["title"].get<std::string>();
      if (d.contains("outline")) opt.outline = d["outline"].get<std::vector<std::string>>();
      if (d.contains("bib_path")) opt.bib_text = read_text(resolve(d["bib_path"].get<std::string>()));
      auto r = corpus::ingest_document(doc, opt, source);
      misses += r.abstract_misses;
      dropped += r.dropped_sections;
      records.push_back(std::move(r.record));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaViolation, std::string("manifest document: ") + e.what());
    }
  }
  std::sort(records.begin(), records.end(), [](const auto& x, const auto& y) { return x.id < y.id; });

  const fs::path out = a.common.out.empty() ? fs::path("ingest") : fs::path(a.common.out);
  fs::create_directories(out);
  corpus::write_jsonl_file(out / "papers.jsonl", records);

  std::ostringstream stats;
  csv::Writer w(stats, "ingest_stats", {"documents", "abstract_misses", "dropped_sections", "train", "test"});
  std::size_t train = records.size(), test = 0;
  if (a.cutoff > 0) {
    const auto split = corpus::chronological_split(records, a.cutoff);
    train = split.train.size();
    test = split.test.size();
    write_text(out / "split.json",
               json{{"cutoff_year", split.cutoff_year}, {"train", split.train}, {"test", split.test}}.dump(2) + "\n");
  }
  w.cell(records.size()).cell(misses).cell(dropped).cell(train).cell(test);
  w.end_row();
  write_text(out / "ingest_stats.csv", stats.str());
  std::cout << "ingested " << records.size() << " documents into " << (out / "papers.jsonl").string() << "\n";
}

void cmd_train_sft(const Common& common) {
  const auto c = common.load();
  const auto setup = harness::make_setup(c);
  std::vector<double> trace;
  const auto params = harness::train_sft(c, setup, &trace);
  fs::create_directories(c.output_dir / "checkpoints");
  policy::save_checkpoint(c.output_dir / "checkpoints" / "policy_round_0.json", params);
  std::ostringstream loss;
  csv::Writer w(loss, "sft_loss", {"epoch", "nll"});
  for (std::size_t e = 0; e < trace.size(); ++e) {
    w.cell(e).cell(trace[e]);
    w.end_row();
  }
  write_text(c.output_dir / "sft_loss.csv", loss.str());
  std::cout << "sft nll " << format_double(trace.front()) << " -> " << format_double(trace.back()) << "\n";
}

void cmd_cycle(const Common& common, std::optional<int> rounds, bool resume) {
  auto c = common.load();
  if (rounds) c.simpo.rounds = *rounds;
  c.validate();
  const auto result = harness::run_cycle(c, resume);
  for (std::size_t t = 0; t < result.stage_scores.size(); ++t)
    std::cout << "P" << t + 1 << " mean_score " << format_double(result.stage_scores[t].mean_score) << "\n";
  std::cout << "artifacts in " << c.output_dir.string() << "\n";
}

struct ReviewArgs {
  Common common;
  std::string input, checkpoint;
  std::size_t count = 16;
};

void cmd_review(const ReviewArgs& a) {
  const auto c = a.common.load();
  const auto setup = harness::make_setup(c);
  std::vector<InputText> texts;
  if (!a.input.empty()) {
    texts = read_sequences(a.input, setup.task.vocab);
  } else {
    const auto params = policy_for(c, a.checkpoint, setup);
    for (std::size_t i = 0; i < a.count; ++i) {
      policy::SamplerConfig sc;
      sc.temperature = c.evaluation.temperature;
      sc.max_len = c.task.max_len;
      sc.seed = derive_seed(c.global_seed, {0x7265, i});
      const auto& prompt = setup.task.eval_prompts[i % setup.task.eval_prompts.size()];
      texts.push_back({"sample-" + std::to_string(i), policy::sample(params, prompt, sc), std::nullopt});
    }
  }
  std::vector<corpus::ReviewRecord> records;
  std::ostringstream scores;
  std::vector<std::string> header{"paper_id"};
  for (int i = 1; i <= c.panel.n_reviewers; ++i) header.push_back("r_" + std::to_string(i));
  for (const char* h : {"model_score", "label", "pred"}) header.push_back(h);
  csv::Writer w(scores, "scores", header);
  for (const auto& t : texts) {
    const auto result = setup.panel.review(t.seq, fnv1a64(t.id, c.global_seed));
    records.push_back(reviewer::to_review_record(t.id, result));
    w.cell(t.id);
    for (const auto& r : result.per_reviewer) w.cell(r.overall);
    w.cell(result.avg).cell("").cell(to_string(result.decision));
    w.end_row();
  }
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  corpus::write_jsonl_file(out / "reviews.jsonl", records);
  write_text(out / "scores.csv", scores.str());
  std::cout << "reviewed " << records.size() << " texts\n";
}

struct EvalArgs {
  Common common;
  std::string scores;
  std::string mode = "n-1";
};

void cmd_eval_proxy(const EvalArgs& a) {
  harness::EvalMode mode;
  if (a.mode == "n-1" || a.mode == "n_minus_1") mode = harness::EvalMode::LeaveOneOut;
  else if (a.mode == "n") mode = harness::EvalMode::AllReviewers;
  else throw Error(ErrorCode::InvalidArgument, "--mode must be 'n-1' or 'n'");
  const fs::path out = a.common.out.empty() ? fs::path(".") : fs::path(a.common.out);
  const auto r = harness::run_eval(a.scores, mode, a.common.seed.value_or(0), out);
  for (const auto& p : r.proxy)
    std::cout << metrics::to_string(p.subject) << " proxy_mse " << format_double(p.proxy_mse) << " proxy_mae "
              << format_double(p.proxy_mae) << "\n";
  if (r.decision) std::cout << "accuracy " << format_double(r.decision->accuracy) << "\n";
}

struct BestArgs {
  Common common;
  std::string checkpoint;
  std::vector<std::size_t> ns;
  std::optional<std::size_t> trials;
};

void cmd_best_of_n(const BestArgs& a) {
  const auto c = a.common.load();
  const auto setup = harness::make_setup(c);
  const auto params = policy_for(c, a.checkpoint, setup);
  policy::SamplerConfig sampler;
  sampler.temperature = c.evaluation.temperature;
  sampler.max_len = c.task.max_len;
  const auto ns = a.ns.empty() ? c.evaluation.sweep_ns : a.ns;
  const auto trials = a.trials.value_or(c.evaluation.sweep_trials);
  const auto result = rejection::sweep(rejection::policy_generator(params, sampler),
                                       rejection::panel_scorer(setup.panel), setup.task.eval_prompts, ns, trials,
                                       derive_seed(c.global_seed, {0x626f6e}));
  std::ostringstream csv_out;
  rejection::write_sweep_csv(csv_out, result);
  fs::create_directories(c.output_dir);
  write_text(c.output_dir / "sweep.csv", csv_out.str());
  for (const auto& r : result.per_n)
    std::cout << "N=" << r.n << " avg_of_best " << format_double(r.avg_of_best) << "\n";
}

struct DetectArgs {
  Common common;
  std::string input, checkpoint;
  std::optional<double> epsilon;
  std::optional<std::size_t> min_length;
};

void cmd_detect(const DetectArgs& a) {
  const auto c = a.common.load();
  detect::DetectorConfig dc;
  if (!a.checkpoint.empty()) {
    dc.scoring_model = policy::load_checkpoint(a.checkpoint);
  } else {
    const auto setup = harness::make_setup(c);
    dc.scoring_model = harness::train_sft(c, setup);
  }
  dc.min_length = a.min_length.value_or(c.detector.min_length);
  const auto texts = read_sequences(a.input, dc.scoring_model.vocab());

  std::vector<std::optional<detect::CurvatureScore>> scores;
  std::vector<double> machine, human;
  std::size_t too_short = 0;
  for (const auto& t : texts) {
    try {
      scores.push_back(detect::curvature(dc, t.seq));
      if (t.truth) (*t.truth == detect::Label::MachineGenerated ? machine : human).push_back(scores.back()->score);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooShort) throw;
      scores.push_back(std::nullopt);
      ++too_short;
    }
  }
  if (a.epsilon) dc.epsilon = *a.epsilon;
  else if (c.detector.epsilon) dc.epsilon = *c.detector.epsilon;
  else if (!machine.empty() && !human.empty()) dc.epsilon = detect::calibrate_scores(machine, human);
  else throw Error(ErrorCode::InvalidArgument, "no epsilon given and the input carries no truth labels to calibrate on");

  std::ostringstream out;
  csv::Writer w(out, "detect", {"id", "log_p", "mu", "sigma", "score", "label"});
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!scores[i]) continue;
    const auto& s = *scores[i];
    w.cell(texts[i].id).cell(s.log_p).cell(s.mu).cell(s.sigma).cell(s.score);
    w.cell(detect::to_string(detect::classify(s, dc.epsilon)));
    w.end_row();
  }
  const fs::path dir = c.output_dir;
  write_text(dir / "detect.csv", out.str());
  std::cout << "epsilon " << format_double(dc.epsilon) << ", scored " << texts.size() - too_short << ", excluded "
            << too_short << " (too short)\n";
}

void cmd_report(const std::string& run_dir) {
  for (const auto& p : harness::emit_plot_data(run_dir)) std::cout << p.string() << "\n";
}

int exit_code(ErrorCode code) {
  switch (category(code)) {
    case ErrorCategory::Usage: return kUsage;
    case ErrorCategory::Numeric: return kNumeric;
    default: return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy research/review improvement cycle"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "parse LaTeX sources into papers.jsonl");
  ingest.common.attach(s_ingest, false);
  s_ingest->add_option("--manifest", ingest.manifest, "documents manifest JSON")->required()->check(CLI::ExistingFile);
  s_ingest->add_option("--abstracts", ingest.abstracts, "offline abstract fixture JSON")->check(CLI::ExistingFile);
  s_ingest->add_option("--cutoff", ingest.cutoff, "chronological split year (papers from this year on are test)");

  Common sft;
  auto* s_sft = app.add_subcommand("train-sft", "supervised initialisation of the policy");
  sft.attach(s_sft);

  Common cycle;
  std::optional<int> rounds;
  bool resume = false;
  auto* s_cycle = app.add_subcommand("cycle", "SFT followed by iterative preference rounds");
  cycle.attach(s_cycle);
  s_cycle->add_option("--rounds", rounds, "override the number of rounds")->check(CLI::NonNegativeNumber);
  s_cycle->add_flag("--resume", resume, "continue from the last complete round in --out");

  ReviewArgs review;
  auto* s_review = app.add_subcommand("review", "score texts with the reviewer panel");
  review.common.attach(s_review);
  s_review->add_option("--input", review.input, "JSONL of {id, prompt?, tokens|text}")->check(CLI::ExistingFile);
  s_review->add_option("--checkpoint", review.checkpoint, "policy to sample from when no --input is given")
      ->check(CLI::ExistingFile);
  s_review->add_option("--count", review.count, "number of samples to draw");

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval-proxy", "proxy MSE/MAE and decision metrics from scores.csv");
  eval.common.attach(s_eval, false);
  s_eval->add_option("--scores", eval.scores, "scores CSV")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--mode", eval.mode, "n-1 (leave one reviewer out) or n");

  BestArgs best;
  auto* s_best = app.add_subcommand("best-of-n", "rejection-sampling sweep");
  best.common.attach(s_best);
  s_best->add_option("--checkpoint", best.checkpoint, "policy checkpoint (default: fresh SFT)")->check(CLI::ExistingFile);
  s_best->add_option("--ns", best.ns, "N values")->delimiter(',');
  s_best->add_option("--trials", best.trials, "trials per N");

  DetectArgs det;
  auto* s_detect = app.add_subcommand("detect", "curvature detector over a JSONL of texts");
  det.common.attach(s_detect);
  s_detect->add_option("--input", det.input, "JSONL of {id, tokens|text, truth?}")->required()->check(CLI::ExistingFile);
  s_detect->add_option("--checkpoint", det.checkpoint, "scoring model checkpoint")->check(CLI::ExistingFile);
  s_detect->add_option("--epsilon", det.epsilon, "decision threshold");
  s_detect->add_option("--min-length", det.min_length, "shortest scorable text");

  std::string run_dir;
  auto* s_report = app.add_subcommand("report", "plot-ready CSVs from a cycle run directory");
  s_report->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*s_ingest) cmd_ingest(ingest);
    else if (*s_sft) cmd_train_sft(sft);
    else if (*s_cycle) cmd_cycle(cycle, rounds, resume);
    else if (*s_review) cmd_review(review);
    else if (*s_eval) cmd_eval_proxy(eval);
    else if (*s_best) cmd_best_of_n(best);
    else if (*s_detect) cmd_detect(det);
    else if (*s_report) cmd_report(run_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
