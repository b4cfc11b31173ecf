#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rrcycle/corpus.hpp"
#include "rrcycle/detect.hpp"
#include "rrcycle/harness.hpp"
#include "rrcycle/metrics.hpp"
#include "rrcycle/policy.hpp"
#include "rrcycle/rejection.hpp"
#include "rrcycle/reviewer.hpp"
#include "rrcycle/simpo.hpp"

namespace py = pybind11;
using namespace rrcycle;
using nlohmann::json;

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them with the json module.
harness::ExperimentConfig config_of(const std::string& text) {
  return harness::config_from_json(json::parse(text));
}

std::optional<Decision> decision_of(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  auto d = parse_decision(*s);
  if (!d) throw Error(ErrorCode::InvalidArgument, "decision must be 'accept' or 'reject': " + *s);
  return d;
}

py::dict panel_dict(const reviewer::PanelResult& r) {
  std::vector<double> overall;
  for (const auto& s : r.per_reviewer) overall.push_back(s.overall);
  py::dict d;
  d["scores"] = overall;
  d["min"] = r.min;
  d["max"] = r.max;
  d["avg"] = r.avg;
  d["decision"] = std::string(to_string(r.decision));
  return d;
}

std::vector<simpo::PreferencePair> pairs_of(const std::vector<py::tuple>& items) {
  std::vector<simpo::PreferencePair> out;
  for (const auto& t : items) {
    if (t.size() != 3) throw Error(ErrorCode::InvalidArgument, "pairs are (prompt, chosen, rejected) tuples");
    simpo::PreferencePair p;
    p.prompt = t[0].cast<std::vector<TokenId>>();
    p.chosen = t[1].cast<std::vector<TokenId>>();
    p.rejected = t[2].cast<std::vector<TokenId>>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the rrcycle review-and-refine toolkit";
#ifdef VERSION_INFO
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#endif

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&] { return py::object(py::exception<Error>(m, "RrcycleError", PyExc_RuntimeError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object exc = type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      exc.attr("category") = std::string(
          category(e.code()) == ErrorCategory::Usage     ? "usage"
          : category(e.code()) == ErrorCategory::Numeric ? "numeric"
                                                         : "data");
      PyErr_SetObject(type.ptr(), exc.ptr());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // policy
  py::class_<policy::PolicyParams>(m, "Policy")
      .def_static(
          "uniform",
          [](std::size_t vocab_size, int order) { return policy::PolicyParams(policy::Vocabulary::numbered(vocab_size), order); },
          py::arg("vocab_size"), py::arg("order") = 1)
      .def_static(
          "random",
          [](std::size_t vocab_size, int order, double scale, std::uint64_t seed) {
            return policy::PolicyParams::random(policy::Vocabulary::numbered(vocab_size), order, scale, seed);
          },
          py::arg("vocab_size"), py::arg("order") = 1, py::arg("scale") = 1.0, py::arg("seed") = 0)
      .def_static("load", &policy::load_checkpoint, py::arg("path"))
      .def("save", [](const policy::PolicyParams& p, const std::filesystem::path& path) { policy::save_checkpoint(path, p); })
      .def_property_readonly("vocab_size", &policy::PolicyParams::vocab_size)
      .def_property_readonly("order", &policy::PolicyParams::order)
      .def_property_readonly("tokens", [](const policy::PolicyParams& p) { return p.vocab().tokens(); })
      .def_property_readonly("logits",
                             [](const policy::PolicyParams& p) {
                               auto l = p.logits();
                               return std::vector<double>(l.begin(), l.end());
                             })
      .def(
          "log_prob",
          [](const policy::PolicyParams& p, const std::vector<TokenId>& completion, const std::vector<TokenId>& prompt) {
            return policy::log_prob(p, prompt, completion);
          },
          py::arg("completion"), py::arg("prompt") = std::vector<TokenId>{})
      .def(
          "sample",
          [](const policy::PolicyParams& p, const std::vector<TokenId>& prompt, std::size_t max_len, double temperature,
             std::uint64_t seed, bool stop_at_terminator) {
            policy::SamplerConfig sc;
            sc.max_len = max_len;
            sc.temperature = temperature;
            sc.seed = seed;
            sc.stop_at_terminator = stop_at_terminator;
            return policy::sample(p, prompt, sc).completion;
          },
          py::arg("prompt") = std::vector<TokenId>{}, py::arg("max_len") = 32, py::arg("temperature") = 1.0,
          py::arg("seed") = 0, py::arg("stop_at_terminator") = true)
      .def("__eq__", [](const policy::PolicyParams& a, const policy::PolicyParams& b) { return a == b; });

  // simpo
  m.def("simpo_reward",
        [](const policy::PolicyParams& p, const std::vector<TokenId>& prompt, const std::vector<TokenId>& completion,
           double beta) { return simpo::simpo_reward(p, prompt, completion, beta); },
        py::arg("policy"), py::arg("prompt"), py::arg("completion"), py::arg("beta") = 2.0);
  m.def("simpo_loss",
        [](const policy::PolicyParams& p, const std::vector<py::tuple>& pairs, double beta, double gamma) {
          return simpo::simpo_loss(p, pairs_of(pairs), beta, gamma);
        },
        py::arg("policy"), py::arg("pairs"), py::arg("beta") = 2.0, py::arg("gamma") = 0.5);
  m.def("combined_loss_and_grad",
        [](const policy::PolicyParams& p, const std::vector<py::tuple>& pairs, double beta, double gamma,
           double lambda) {
          simpo::SimpoConfig c;
          c.beta = beta;
          c.gamma = gamma;
          c.lambda = lambda;
          auto r = simpo::combined_loss_and_grad(p, pairs_of(pairs), c);
          return py::make_tuple(r.loss, r.grad);
        },
        py::arg("policy"), py::arg("pairs"), py::arg("beta") = 2.0, py::arg("gamma") = 0.5, py::arg("lambda_") = 0.1);
  m.def("select_pair", [](const std::vector<double>& scores) { return simpo::select_pair(scores); });

  // reviewer
  m.def("aggregate",
        [](const std::vector<double>& overalls, double threshold) {
          return panel_dict(reviewer::aggregate(overalls, threshold));
        },
        py::arg("overalls"), py::arg("threshold") = 5.5);
  m.def("aspect_bin", &reviewer::aspect_bin);

  // metrics
  m.def("proxy_report",
        [](const std::vector<std::vector<double>>& human, const std::optional<std::vector<double>>& model,
           const std::string& mode, const std::string& subject, std::uint64_t seed) {
          metrics::ScoreMatrix mat(human.size());
          for (std::size_t i = 0; i < human.size(); ++i) {
            mat[i].paper_id = "p" + std::to_string(i);
            mat[i].human = human[i];
            if (model) mat[i].model_score = model->at(i);
          }
          const auto pm = mode == "n" ? metrics::ProxyMode::AllReviewers : metrics::ProxyMode::LeaveOneOut;
          if (mode != "n" && mode != "n-1") throw Error(ErrorCode::InvalidArgument, "mode must be 'n-1' or 'n'");
          const auto sub = subject == "human" ? metrics::Subject::Human : metrics::Subject::Model;
          const auto r = metrics::evaluate_scores(mat, pm, sub, seed);
          py::dict d;
          d["proxy_mse"] = r.proxy_mse;
          d["proxy_mae"] = r.proxy_mae;
          d["rows_used"] = r.rows_used;
          d["rows_dropped"] = r.rows_dropped;
          return d;
        },
        py::arg("human"), py::arg("model") = py::none(), py::arg("mode") = "n-1", py::arg("subject") = "model",
        py::arg("seed") = 0);
  m.def("decision_metrics",
        [](const std::vector<std::string>& labels, const std::vector<std::string>& preds) {
          if (labels.size() != preds.size()) throw Error(ErrorCode::InvalidArgument, "labels and preds differ in length");
          metrics::ScoreMatrix mat(labels.size());
          for (std::size_t i = 0; i < labels.size(); ++i) {
            mat[i].paper_id = "p" + std::to_string(i);
            mat[i].label = decision_of(labels[i]);
            mat[i].pred = decision_of(preds[i]);
          }
          const auto r = metrics::decision_metrics(mat);
          py::dict d;
          d["accuracy"] = r.accuracy;
          d["macro_f1"] = r.macro_f1;
          d["f1_accept"] = r.f1_accept;
          d["f1_reject"] = r.f1_reject;
          return d;
        });

  // detect
  m.def("curvature",
        [](const policy::PolicyParams& p, const std::vector<TokenId>& text, const std::vector<TokenId>& prompt,
           std::size_t min_length) {
          const auto s = detect::curvature({p, 0.0, min_length}, policy::Sequence{prompt, text});
          py::dict d;
          d["log_p"] = s.log_p;
          d["mu"] = s.mu;
          d["sigma"] = s.sigma;
          d["score"] = s.score;
          return d;
        },
        py::arg("policy"), py::arg("text"), py::arg("prompt") = std::vector<TokenId>{}, py::arg("min_length") = 16);
  m.def("calibrate_scores", [](const std::vector<double>& machine, const std::vector<double>& human) {
    return detect::calibrate_scores(machine, human);
  });

  // corpus
  m.def("strip_latex_comments", [](const std::string& s) { return corpus::strip_latex_comments(s); });
  m.def("segment_sections", [](const std::string& text) {
    corpus::RawLatexDoc doc;
    doc.text = text;
    std::vector<py::tuple> out;
    for (const auto& s : corpus::segment_sections(doc)) out.push_back(py::make_tuple(s.heading, s.level, s.body));
    return out;
  });
  m.def("normalize_title", [](const std::string& s) { return corpus::normalize_title(s); });
  m.def("chronological_split", [](const std::vector<std::pair<std::string, int>>& id_years, int cutoff) {
    std::vector<corpus::PaperRecord> recs(id_years.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      recs[i].id = id_years[i].first;
      recs[i].year = id_years[i].second;
    }
    const auto s = corpus::chronological_split(recs, cutoff);
    return py::make_tuple(s.train, s.test);
  });

  // harness
  m.def("default_config_json", [] { return harness::to_json(harness::default_config()).dump(); });
  m.def("normalize_config_json", [](const std::string& text) { return harness::to_json(config_of(text)).dump(); });
  m.def(
      "run_cycle",
      [](const std::string& config_json, bool write_files, bool resume) {
        const auto c = config_of(config_json);
        harness::CycleResult r;
        {
          py::gil_scoped_release release;
          r = write_files ? harness::run_cycle(c, resume) : harness::run_cycle_in_memory(c);
        }
        std::vector<double> scores, accept;
        for (const auto& s : r.stage_scores) {
          scores.push_back(s.mean_score);
          accept.push_back(s.accept_rate);
        }
        py::dict d;
        d["stage_scores"] = scores;
        d["accept_rates"] = accept;
        d["policy"] = r.final_params;
        return d;
      },
      py::arg("config_json"), py::arg("write_files") = false, py::arg("resume") = false);
  m.def(
      "best_of_n_sweep",
      [](const std::string& config_json, const policy::PolicyParams& p, const std::vector<std::size_t>& ns,
         std::size_t trials, std::uint64_t seed) {
        const auto c = config_of(config_json);
        const auto setup = harness::make_setup(c);
        policy::SamplerConfig sc;
        sc.temperature = c.evaluation.temperature;
        sc.max_len = c.task.max_len;
        const auto r = rejection::sweep(rejection::policy_generator(p, sc), rejection::panel_scorer(setup.panel),
                                        setup.task.eval_prompts, ns, trials, seed);
        std::vector<py::dict> rows;
        for (const auto& row : r.per_n) {
          py::dict d;
          d["N"] = row.n;
          d["avg_of_best"] = row.avg_of_best;
          d["avg_max"] = row.avg_max;
          d["avg_min"] = row.avg_min;
          d["trials"] = row.trials;
          rows.push_back(d);
        }
        return rows;
      },
      py::arg("config_json"), py::arg("policy"), py::arg("ns"), py::arg("trials") = 100, py::arg("seed") = 0);
  m.def("emit_plot_data", [](const std::filesystem::path& dir) { return harness::emit_plot_data(dir); });
}
