#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ccprobe/dataset.hpp"
#include "ccprobe/error.hpp"
#include "ccprobe/grammar.hpp"
#include "ccprobe/io.hpp"
#include "ccprobe/pipeline.hpp"
#include "ccprobe/probe.hpp"
#include "ccprobe/provider.hpp"
#include "ccprobe/semantics.hpp"

namespace py = pybind11;
using namespace ccprobe;

// Structured results cross the boundary as JSON text; the Python package
// decodes them.
namespace {

std::optional<Label> maybe_label(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return parse_label(*s);
}

std::string sample(const std::string& grammar_name, std::uint64_t seed, const std::optional<std::string>& label) {
  auto g = grammar::resolve_grammar(grammar_name);
  return io::dump(io::to_json(grammar::sample_sentence(g, seed, maybe_label(label))));
}

std::string recognize(const std::string& text, const std::string& grammar_name) {
  auto r = grammar::recognize(grammar::resolve_grammar(grammar_name), text);
  io::Json j{{"verdict", grammar::to_string(r.verdict)}};
  j["features"] = r.features ? io::to_json(*r.features) : io::Json(nullptr);
  return io::dump(j);
}

std::string pool(const std::string& grammar_name, std::size_t n_pairs, std::uint64_t seed) {
  io::Json out = io::Json::array();
  for (const auto& s : dataset::artificial_pool(grammar::resolve_grammar(grammar_name), n_pairs, seed)) {
    out.push_back(io::to_json(s));
  }
  return io::dump(out);
}

std::string build_dataset(const std::string& pool_json, const std::string& feature, int n_star,
                          const std::string& split, std::uint64_t seed) {
  std::vector<LabeledSentence> p;
  for (const auto& j : io::Json::parse(pool_json)) p.push_back(io::labeled_sentence_from_json(j));
  dataset::BuildOptions o;
  o.feature = parse_feature(feature);
  o.n_star = n_star;
  o.split = dataset::parse_split(split);
  o.seed = seed;
  auto r = dataset::build_feature_subset(p, o);
  auto report = dataset::verify_balance(r.dataset);
  io::Json items = io::Json::array();
  for (const auto& item : r.dataset.items) items.push_back(io::to_json(item));
  return io::dump(io::Json{{"v_min", r.dataset.spec.v_min},
                           {"v_max", r.dataset.spec.v_max},
                           {"paired", r.paired},
                           {"balanced", report.pass},
                           {"reasons", report.reasons},
                           {"items", std::move(items)}});
}

py::dict train_probe(const std::vector<std::vector<double>>& x, const std::vector<std::string>& labels, double l2) {
  if (x.size() != labels.size()) throw Error("dimension_mismatch", "x and labels differ in length");
  std::vector<probe::Example> examples;
  for (std::size_t i = 0; i < x.size(); ++i) examples.push_back({x[i], parse_label(labels[i]), 0});
  probe::TrainOptions o;
  o.l2 = l2;
  auto m = probe::train_probe(examples, o);
  py::dict d;
  d["weights"] = m.weights;
  d["bias"] = m.bias;
  d["mean"] = m.standardization.mean;
  d["std"] = m.standardization.std;
  d["iterations"] = m.iterations;
  d["converged"] = m.converged;
  std::vector<std::string> predictions;
  for (const auto& row : x) predictions.emplace_back(to_string(probe::predict(m, row)));
  d["train_predictions"] = predictions;
  return d;
}

py::dict mock_embed(const std::string& text, const std::string& mode, std::uint64_t seed) {
  provider::MockConfig c;
  c.mode = provider::parse_mock_mode(mode);
  c.seed = seed;
  provider::MockProvider mock(c);
  auto e = mock.embed(text);
  std::vector<std::vector<double>> pooled;
  for (std::size_t l = 0; l < e.layers.size(); ++l) pooled.push_back(provider::mean_pool(e, static_cast<int>(l)));
  py::dict d;
  d["tokens"] = e.tokens;
  d["layers"] = e.layers;
  d["pooled"] = pooled;
  return d;
}

py::dict render(const std::string& schema, const std::map<std::string, std::string>& slots, bool will_be) {
  semantics::TemplateOptions o;
  o.will_be = will_be;
  auto inst = semantics::render_scenario(semantics::parse_schema(schema), slots, o);
  py::dict d;
  d["text"] = inst.text;
  d["correct"] = inst.correct;
  d["incorrect"] = inst.incorrect;
  return d;
}

double flip(const std::vector<bool>& base, const std::vector<bool>& variant) {
  auto records = [](const std::vector<bool>& d) {
    std::vector<semantics::ScoreRecord> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      out[i].base_id = std::to_string(i);
      out[i].decision = d[i];
    }
    return out;
  };
  return semantics::decision_flip(records(base), records(variant));
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int status;
  {
    py::gil_scoped_release release;
    status = pipeline::run(args, out, err);
  }
  return py::make_tuple(status, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ccprobe core bindings";

  static py::exception<Error> error(m, "CcprobeError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error((e.code() + ": " + e.what()).c_str());
    }
  });

  m.def("sample_sentence", &sample, py::arg("grammar") = "train", py::arg("seed") = 0,
        py::arg("label") = py::none());
  m.def("recognize", &recognize, py::arg("text"), py::arg("grammar") = "train");
  m.def("negate_core", &grammar::negate_core, py::arg("tokens"));
  m.def("lexical_overlap", [] {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& c :
         grammar::lexical_overlap(grammar::bundled_grammar("train"), grammar::bundled_grammar("test"))) {
      out[c.word_class] = c.shared;
    }
    return out;
  });
  m.def("artificial_pool", &pool, py::arg("grammar"), py::arg("n_pairs"), py::arg("seed") = 0);
  m.def("build_dataset", &build_dataset, py::arg("pool"), py::arg("feature"), py::arg("n_star"),
        py::arg("split") = "train", py::arg("seed") = 0);
  m.def("quartile_upper", &dataset::quartile_upper);
  m.def("train_probe", &train_probe, py::arg("x"), py::arg("labels"), py::arg("l2") = 1.0);
  m.def("mock_embed", &mock_embed, py::arg("text"), py::arg("mode") = "bag", py::arg("seed") = 0);
  m.def("render_scenario", &render, py::arg("schema"), py::arg("slots"), py::arg("will_be") = false);
  m.def("calibrate", &semantics::calibrate, py::arg("base"), py::arg("contexts"));
  m.def("decision_flip", &flip, py::arg("base"), py::arg("variant"));
  m.def("config_hash", [](const std::string& config) {
    return pipeline::config_hash(pipeline::merge_config(io::Json::parse(config)));
  });
  m.def("run_cli", &run_cli, py::arg("args"));
}
