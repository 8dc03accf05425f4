#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "promptboost/booster.hpp"
#include "promptboost/dataset_io.hpp"
#include "promptboost/error.hpp"
#include "promptboost/metrics.hpp"
#include "promptboost/pipeline.hpp"
#include "promptboost/synthetic.hpp"
#include "promptboost/verbalizer.hpp"

namespace py = pybind11;
using namespace promptboost;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

PromptMatrix to_matrix(const FloatArray& probs, const std::string& prompt_id,
                       std::vector<std::string> example_ids, const std::string& vocab_id) {
  if (probs.ndim() != 2) throw DimensionMismatch("expected a 2-d array of distributions");
  const auto n = static_cast<std::size_t>(probs.shape(0));
  const auto v = static_cast<std::size_t>(probs.shape(1));
  if (example_ids.empty()) {
    for (std::size_t i = 0; i < n; ++i) example_ids.push_back(std::to_string(i));
  }
  std::vector<float> data(probs.data(), probs.data() + n * v);
  return PromptMatrix(prompt_id, SplitTag::train, std::move(example_ids), v, std::move(data),
                      vocab_id);
}

std::vector<double> weights_or_uniform(std::optional<std::vector<double>> w, std::size_t n) {
  if (w) {
    if (w->size() != n) throw DimensionMismatch("weights and rows differ in length");
    return *w;
  }
  return std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0);
}

// {prompt_id: array} -> one matrix per prompt, in key order.
std::vector<PromptMatrix> pool_from_dict(const py::dict& d) {
  std::vector<PromptMatrix> out;
  for (auto [key, value] : d) {
    out.push_back(to_matrix(value.cast<FloatArray>(), key.cast<std::string>(), {}, ""));
  }
  return out;
}

ScreenOptions screen_opts(std::size_t m, std::uint64_t budget) {
  ScreenOptions o;
  o.m = m;
  o.combination_budget = budget;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prompt ensembles over cached masked-LM distributions";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<VocabMismatch>(m, "VocabMismatch", base.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<NoValidCombination>(m, "NoValidCombination", base.ptr());
  py::register_exception<ExhaustedRetries>(m, "ExhaustedRetries", base.ptr());
  py::register_exception<InsufficientExamples>(m, "InsufficientExamples", base.ptr());
  py::register_exception<MultipleMasks>(m, "MultipleMasks", base.ptr());
  py::register_exception<PlacementMismatch>(m, "PlacementMismatch", base.ptr());

  py::class_<LabeledExample>(m, "LabeledExample")
      .def(py::init([](std::string id, std::string text_a, int label,
                       std::optional<std::string> text_b) {
             return LabeledExample{std::move(id), std::move(text_a), std::move(text_b), label};
           }),
           py::arg("id"), py::arg("text_a"), py::arg("label"), py::arg("text_b") = py::none())
      .def_readonly("id", &LabeledExample::id)
      .def_readonly("text_a", &LabeledExample::text_a)
      .def_readonly("text_b", &LabeledExample::text_b)
      .def_readonly("label", &LabeledExample::label);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](std::vector<LabeledExample> examples, int num_classes,
                       const std::string& split) {
             return Dataset(std::move(examples), num_classes, split_from_string(split));
           }),
           py::arg("examples"), py::arg("num_classes"), py::arg("split") = "train")
      .def("__len__", &Dataset::size)
      .def("__getitem__", [](const Dataset& d, std::size_t i) {
        if (i >= d.size()) throw py::index_error();
        return d[i];
      })
      .def_property_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly("split", [](const Dataset& d) { return to_string(d.split()); })
      .def("labels", &Dataset::labels)
      .def("ids", &Dataset::ids);

  py::class_<PromptTemplate>(m, "PromptTemplate")
      .def(py::init([](std::string id, std::string prefix, std::string suffix,
                       const std::string& placement) {
             return PromptTemplate{std::move(id), std::move(prefix), std::move(suffix),
                                   placement_from_string(placement)};
           }),
           py::arg("id"), py::arg("prefix"), py::arg("suffix"), py::arg("placement") = "after_a")
      .def_readonly("id", &PromptTemplate::id)
      .def_readonly("prefix", &PromptTemplate::prefix)
      .def_readonly("suffix", &PromptTemplate::suffix)
      .def_property_readonly("placement",
                             [](const PromptTemplate& p) { return to_string(p.placement); });

  m.def("render", &render, py::arg("prompt"), py::arg("example"),
        py::arg("mask_literal") = std::string(kDefaultMaskLiteral));
  m.def("load_prompts", [](const std::string& path) { return load_prompts(path); });
  m.def("sample_few_shot",
        [](const Dataset& source, std::size_t k, std::uint64_t seed) {
          return sample_few_shot(source, {k, seed});
        },
        py::arg("source"), py::arg("k"), py::arg("seed"));
  m.def("make_synthetic_corpus",
        [](int num_classes, std::size_t per_class, std::uint64_t seed, const std::string& split) {
          return make_synthetic_corpus(num_classes, per_class, seed, split_from_string(split));
        },
        py::arg("num_classes"), py::arg("per_class"), py::arg("seed"),
        py::arg("split") = "train");

  py::class_<SyntheticOracle>(m, "SyntheticOracle")
      .def(py::init([](std::uint64_t seed, double class_signal, int num_classes,
                       std::size_t vocab_size) {
             return std::make_unique<SyntheticOracle>(
                 SyntheticOracleConfig{seed, class_signal, num_classes, vocab_size});
           }),
           py::arg("seed"), py::arg("class_signal"), py::arg("num_classes"),
           py::arg("vocab_size") = 64)
      .def("bind", &SyntheticOracle::bind)
      .def("query",
           [](SyntheticOracle& o, const std::string& text) {
             const auto d = o.query(text);
             return py::array_t<float>(static_cast<py::ssize_t>(d.probs.size()), d.probs.data());
           })
      .def("queries_issued", &SyntheticOracle::queries_issued)
      .def_property_readonly("vocab_size", &SyntheticOracle::vocab_size)
      .def_property_readonly("vocab_id", &SyntheticOracle::vocab_id)
      .def("distributions",
           [](SyntheticOracle& o, const Dataset& d, const PromptTemplate& p) {
             FloatArray out({d.size(), o.vocab_size()});
             float* dst = out.mutable_data();
             for (std::size_t i = 0; i < d.size(); ++i) {
               const auto probs = o.query(render(p, d[i])).probs;
               dst = std::copy(probs.begin(), probs.end(), dst);
             }
             return out;
           },
           py::arg("dataset"), py::arg("prompt"),
           "N x V array of mask distributions for every example rendered through `prompt`.");

  m.def("score_matrix",
        [](const FloatArray& probs, const std::vector<ClassIndex>& labels,
           std::optional<std::vector<double>> weights, int num_classes) {
          const auto pm = to_matrix(probs, "p", {}, "");
          const auto w = weights_or_uniform(std::move(weights), pm.rows());
          const auto s = score_matrix(pm, labels, w, num_classes);
          DoubleArray out({static_cast<std::size_t>(num_classes), pm.vocab_size()});
          for (int c = 0; c < num_classes; ++c) {
            std::copy(s.row(c).begin(), s.row(c).end(),
                      out.mutable_data() + static_cast<std::size_t>(c) * pm.vocab_size());
          }
          return out;
        },
        py::arg("probs"), py::arg("labels"), py::arg("weights") = py::none(),
        py::arg("num_classes"));

  m.def("l1_assignment",
        [](const DoubleArray& scores) {
          if (scores.ndim() != 2) throw DimensionMismatch("expected a 2-d score array");
          ScoreMatrix s(static_cast<int>(scores.shape(0)), static_cast<std::size_t>(scores.shape(1)));
          for (py::ssize_t c = 0; c < scores.shape(0); ++c) {
            for (py::ssize_t v = 0; v < scores.shape(1); ++v) {
              s(static_cast<int>(c), static_cast<std::size_t>(v)) = scores.at(c, v);
            }
          }
          return l1_assignment(s);
        },
        py::arg("scores"));

  m.def("learn_verbalizer",
        [](const FloatArray& probs, const std::vector<ClassIndex>& labels,
           std::optional<std::vector<double>> weights, int num_classes, std::size_t top_m,
           std::uint64_t budget) {
          const auto pm = to_matrix(probs, "p", {}, "");
          const auto w = weights_or_uniform(std::move(weights), pm.rows());
          ScreenResult r;
          learn_weak_learner(pm, labels, w, num_classes, screen_opts(top_m, budget), &r);
          py::dict out;
          out["chosen_tokens"] = r.verbalizer.chosen_tokens;
          out["weighted_accuracy"] = r.weighted_accuracy;
          out["effective_m"] = r.effective_m;
          out["combinations_visited"] = r.combinations_visited;
          return out;
        },
        py::arg("probs"), py::arg("labels"), py::arg("weights") = py::none(),
        py::arg("num_classes"), py::arg("m") = 10, py::arg("combination_budget") = 100000);

  m.def("samme_alpha", &samme_alpha, py::arg("err"), py::arg("num_classes"));

  py::class_<Ensemble>(m, "Ensemble")
      .def_static("from_json", [](const std::string& s) { return ensemble_from_json(s); })
      .def("to_json", &ensemble_to_json)
      .def_readonly("num_classes", &Ensemble::num_classes)
      .def_readonly("vocab_id", &Ensemble::vocab_id)
      .def_property_readonly("mode", [](const Ensemble& e) { return to_string(e.mode); })
      .def_property_readonly("prompt_ids", &Ensemble::prompt_ids)
      .def("__len__", [](const Ensemble& e) { return e.learners.size(); })
      .def("predict",
           [](const Ensemble& e, const py::dict& matrices, bool average_probabilities) {
             PredictOptions opt;
             opt.average_probabilities = average_probabilities;
             return predict_all(e, pool_from_dict(matrices), opt);
           },
           py::arg("matrices"), py::arg("average_probabilities") = false,
           "matrices maps prompt id to an N x V array; rows must line up across prompts.");

  m.def("boost",
        [](const py::dict& train, const std::vector<ClassIndex>& train_labels,
           const py::dict& validation, const std::vector<ClassIndex>& validation_labels,
           int num_classes, std::size_t max_learners, std::size_t top_m, std::size_t patience,
           std::uint64_t seed) {
          BoostConfig cfg;
          cfg.max_learners = max_learners;
          cfg.screen.m = top_m;
          cfg.patience = patience;
          cfg.rng_seed = seed;
          const auto tr = pool_from_dict(train), val = pool_from_dict(validation);
          BoostResult r;
          {
            py::gil_scoped_release release;
            r = boost(tr, train_labels, val, validation_labels, num_classes, cfg);
          }
          py::list history;
          for (const auto& h : r.history) {
            py::dict row;
            row["t"] = h.t;
            row["prompt_id"] = h.prompt_id;
            row["err"] = h.err;
            row["alpha"] = h.alpha;
            row["val_accuracy"] = h.val_accuracy;
            history.append(row);
          }
          py::dict out;
          out["ensemble"] = r.ensemble;
          out["history"] = history;
          out["stop_reason"] = std::string(to_string(r.stop_reason));
          out["best_length"] = r.best_length;
          return out;
        },
        py::arg("train"), py::arg("train_labels"), py::arg("validation") = py::dict(),
        py::arg("validation_labels") = std::vector<ClassIndex>{}, py::arg("num_classes"),
        py::arg("max_learners") = 200, py::arg("m") = 10, py::arg("patience") = 20,
        py::arg("seed") = 0);

  m.def("accuracy",
        [](const std::vector<ClassIndex>& predicted, const std::vector<ClassIndex>& labels,
           int num_classes) {
          return score_predictions(predicted, labels, num_classes, false).accuracy;
        },
        py::arg("predicted"), py::arg("labels"), py::arg("num_classes"));

  m.def("encode_pbm",
        [](const FloatArray& probs, const std::string& vocab_id) {
          if (probs.ndim() != 2) throw DimensionMismatch("expected a 2-d array");
          PbmPayload p;
          p.vocab_id = vocab_id;
          p.rows = static_cast<std::uint32_t>(probs.shape(0));
          p.vocab_size = static_cast<std::uint32_t>(probs.shape(1));
          p.data.assign(probs.data(), probs.data() + probs.size());
          return py::bytes(encode_pbm(p));
        },
        py::arg("probs"), py::arg("vocab_id"));
  m.def("decode_pbm", [](const py::bytes& b) {
    const auto p = decode_pbm(std::string(b), "<bytes>");
    FloatArray arr({static_cast<std::size_t>(p.rows), static_cast<std::size_t>(p.vocab_size)});
    std::copy(p.data.begin(), p.data.end(), arr.mutable_data());
    return py::make_tuple(p.vocab_id, arr);
  });
}
