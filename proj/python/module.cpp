// Python bindings for the main toolkit operations: corpus synthesis,
// training, evaluation, and a few scoring primitives.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kws/pipeline.hpp"

namespace py = pybind11;
using namespace kws;

namespace {

ScoreMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows,
                             ScoreSemantics sem) {
  const int t = static_cast<int>(rows.size());
  const int u = t > 0 ? static_cast<int>(rows[0].size()) : 0;
  ScoreMatrix m(t, u, 0.0, sem);
  for (int i = 0; i < t; ++i) {
    if (static_cast<int>(rows[i].size()) != u)
      throw DimensionMismatchError("ragged matrix rows");
    for (int j = 0; j < u; ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

std::vector<std::vector<double>> matrix_to_rows(const ScoreMatrix& m) {
  std::vector<std::vector<double>> rows(m.num_frames,
                                        std::vector<double>(m.num_units));
  for (int t = 0; t < m.num_frames; ++t)
    for (int u = 0; u < m.num_units; ++u) rows[t][u] = m.at(t, u);
  return rows;
}

}  // namespace

PYBIND11_MODULE(_kws, m) {
  m.doc() = "keyword spotting toolkit bindings";

  py::register_exception<KwsError>(m, "KwsError");

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("num_phones", &SynthConfig::num_phones)
      .def_readwrite("feat_dim", &SynthConfig::feat_dim)
      .def_readwrite("mean_scale", &SynthConfig::mean_scale)
      .def_readwrite("noise_sigma", &SynthConfig::noise_sigma)
      .def_readwrite("min_duration", &SynthConfig::min_duration)
      .def_readwrite("max_duration", &SynthConfig::max_duration)
      .def_readwrite("lexicon_size", &SynthConfig::lexicon_size)
      .def_readwrite("min_word_phones", &SynthConfig::min_word_phones)
      .def_readwrite("max_word_phones", &SynthConfig::max_word_phones)
      .def_readwrite("num_keywords", &SynthConfig::num_keywords)
      .def_readwrite("min_keyword_phones", &SynthConfig::min_keyword_phones)
      .def_readwrite("max_keyword_phones", &SynthConfig::max_keyword_phones)
      .def_readwrite("train_utts", &SynthConfig::train_utts)
      .def_readwrite("dev_utts", &SynthConfig::dev_utts)
      .def_readwrite("test_utts", &SynthConfig::test_utts)
      .def_readwrite("min_words", &SynthConfig::min_words)
      .def_readwrite("max_words", &SynthConfig::max_words)
      .def_readwrite("positive_fraction", &SynthConfig::positive_fraction)
      .def_readwrite("seed", &SynthConfig::seed);

  py::class_<Corpus>(m, "Corpus")
      .def_property_readonly("phones",
                             [](const Corpus& c) { return c.phones; })
      .def_property_readonly("keywords",
                             [](const Corpus& c) { return c.keywords; })
      .def_property_readonly(
          "num_train", [](const Corpus& c) { return c.train.size(); })
      .def_property_readonly("num_dev",
                             [](const Corpus& c) { return c.dev.size(); })
      .def_property_readonly("num_test",
                             [](const Corpus& c) { return c.test.size(); });

  m.def("gen_corpus", &gen_corpus, py::arg("config"));
  m.def("write_corpus", &write_corpus, py::arg("corpus"), py::arg("dir"));
  m.def("load_corpus", &load_corpus, py::arg("dir"));

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("data_dir", &PipelineConfig::data_dir)
      .def_readwrite("work_dir", &PipelineConfig::work_dir)
      .def_readwrite("synth", &PipelineConfig::synth)
      .def_readwrite("threads", &PipelineConfig::threads)
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("ce_epochs", &PipelineConfig::ce_epochs)
      .def_readwrite("seq_epochs", &PipelineConfig::seq_epochs)
      .def_property(
          "criterion",
          [](const PipelineConfig& c) { return criterion_name(c.criterion.kind); },
          [](PipelineConfig& c, const std::string& n) {
            c.criterion.kind = criterion_from_name(n);
          })
      .def_property(
          "topology",
          [](const PipelineConfig& c) { return topo_kind_name(c.topology); },
          [](PipelineConfig& c, const std::string& n) {
            c.topology = topo_kind_from_name(n);
          });

  m.def("config_from_json", &config_from_json_text, py::arg("text"));
  m.def("load_config", &load_config, py::arg("path"));

  py::class_<TrainedSystem>(m, "TrainedSystem")
      .def_property_readonly(
          "skipped_utts",
          [](const TrainedSystem& s) { return s.skipped_utts; })
      .def_property_readonly(
          "thresholds",
          [](const TrainedSystem& s) { return s.thresholds.per_keyword; })
      .def_property_readonly("keywords", [](const TrainedSystem& s) {
        return s.sd.keyword_names;
      });

  m.def("train_system", &train_system, py::arg("corpus"), py::arg("config"));
  m.def("save_system", &save_system, py::arg("system"), py::arg("dir"));
  m.def("load_system", &load_system, py::arg("dir"), py::arg("config"),
        py::arg("corpus"));

  py::class_<EvalOutputs>(m, "EvalOutputs")
      .def_property_readonly(
          "metrics_csv",
          [](const EvalOutputs& o) { return o.metrics.metrics_csv(); })
      .def_property_readonly(
          "roc_csv", [](const EvalOutputs& o) { return o.metrics.roc_csv(); })
      .def_property_readonly(
          "timing_csv",
          [](const EvalOutputs& o) { return o.timing.timing_csv(); })
      .def_property_readonly(
          "modes",
          [](const EvalOutputs& o) {
            std::vector<std::string> names;
            for (const auto& mm : o.metrics.modes) names.push_back(mm.name);
            return names;
          })
      .def("eer",
           [](const EvalOutputs& o, const std::string& mode) {
             for (const auto& mm : o.metrics.modes)
               if (mm.name == mode) return mm.eer;
             throw KwsError("no such decode mode: " + mode);
           })
      .def_property_readonly("detections_csv", [](const EvalOutputs& o) {
        return o.detections_csv;
      });

  m.def("run_eval", &run_eval, py::arg("corpus"), py::arg("config"),
        py::arg("system"));
  m.def("run_sweep", &run_sweep, py::arg("corpus"), py::arg("config"),
        py::arg("system"));

  m.def(
      "compute_eer",
      [](const std::vector<double>& pos, const std::vector<double>& neg) {
        EerResult r = compute_eer(pos, neg);
        std::vector<std::tuple<double, double, double>> roc;
        for (const RocPoint& p : r.roc)
          roc.emplace_back(p.threshold, p.far, p.frr);
        return py::make_tuple(r.eer, roc);
      },
      py::arg("positive_scores"), py::arg("negative_scores"));
  m.def("compute_faf", &compute_faf, py::arg("detections"), py::arg("hours"));
  m.def("measure_rtf", &measure_rtf, py::arg("decode_seconds"),
        py::arg("audio_seconds"));

  m.def(
      "smooth_posteriors",
      [](const std::vector<std::vector<double>>& rows, int w_s, int w_m) {
        ScoreMatrix in =
            matrix_from_rows(rows, ScoreSemantics::kLinearPosterior);
        return matrix_to_rows(smooth_posteriors(in, SmoothConfig{w_s, w_m}));
      },
      py::arg("posteriors"), py::arg("w_s"), py::arg("w_m"));

  m.def(
      "edit_distance",
      [](const std::vector<int>& hyp, const std::vector<int>& ref,
         int num_units) {
        return -med_align(hyp, ref, unit_cost_confusions(num_units));
      },
      py::arg("hyp"), py::arg("ref"), py::arg("num_units"),
      "classic edit distance via the unit-cost confusion matrix");
}
