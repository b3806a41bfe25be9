#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nase/checkpoint.hpp"
#include "nase/config.hpp"
#include "nase/errors.hpp"
#include "nase/experiment.hpp"
#include "nase/metrics.hpp"
#include "nase/sampling.hpp"
#include "nase/schedule.hpp"

namespace py = pybind11;
using namespace nase;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  return config_from_json(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

py::dict coeffs_dict(const PosteriorCoefficients& c) {
  py::dict d;
  d["c_xt"] = c.c_xt;
  d["c_yt"] = c.c_yt;
  d["c_eps"] = c.c_eps;
  d["delta_tilde"] = c.delta_tilde;
  return d;
}

py::list records_list(const std::vector<Record>& records) {
  py::list out;
  for (const auto& r : records) {
    py::dict d;
    d["id"] = r.id;
    d["family"] = r.family;
    d["label"] = r.label;
    d["snr_db"] = r.snr_db;
    d["clean"] = to_array(r.clean);
    d["noisy"] = to_array(r.noisy);
    out.append(d);
  }
  return out;
}

std::vector<Record> rows_as_records(const Array& noisy) {
  if (noisy.ndim() != 2) throw std::invalid_argument("expected a 2-d array [utterances, samples]");
  const auto rows = static_cast<std::size_t>(noisy.shape(0)), cols = static_cast<std::size_t>(noisy.shape(1));
  std::vector<Record> records(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    records[i].id = "row" + std::to_string(i);
    records[i].noisy.assign(noisy.data() + i * cols, noisy.data() + (i + 1) * cols);
  }
  return records;
}

Array stack(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Array out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(cols)});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), out.mutable_data() + i * cols);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Noise-aware conditional diffusion speech enhancement on synthetic signals";

  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<MissingFileError>(m, "MissingFileError", PyExc_FileNotFoundError);
  py::register_exception<VersionError>(m, "VersionError", PyExc_ValueError);
  py::register_exception<EmptyInputError>(m, "EmptyInputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ScheduleError>(m, "ScheduleError", PyExc_ValueError);

  py::class_<Schedule>(m, "Schedule")
      .def(py::init([](int steps, double beta_start, double beta_end, std::optional<double> kappa) {
             ScheduleConfig c;
             c.steps = steps;
             c.beta_start = beta_start;
             c.beta_end = beta_end;
             c.kappa = kappa;
             return c.build();
           }),
           py::arg("steps") = 50, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.035,
           py::arg("kappa") = py::none())
      .def_property_readonly("steps", &Schedule::steps)
      .def("alpha_bar", &Schedule::alpha_bar, py::arg("t"))
      .def("beta", &Schedule::beta, py::arg("t"))
      .def("w", &Schedule::w, py::arg("t"))
      .def("delta", &Schedule::delta, py::arg("t"))
      .def("coeffs", [](const Schedule& s, int t) { return coeffs_dict(s.coeffs(t)); }, py::arg("t"))
      .def("posterior", [](const Schedule& s, int t, int prev) { return coeffs_dict(derive_posterior(s, t, prev)); },
           py::arg("t"), py::arg("prev"))
      .def("to_json", [](const Schedule& s) { return s.to_json().dump(); });

  m.def("default_config", [](const std::string& overrides) { return to_json(parse_config(overrides)).dump(); },
        py::arg("overrides") = "", "Resolved experiment config as JSON, with optional JSON overrides.");

  m.def("generate_corpus",
        [](const std::string& config) {
          const Corpus c = build_corpus(parse_config(config).corpus);
          py::dict d;
          d["train"] = records_list(c.train);
          d["test"] = records_list(c.test);
          d["unseen"] = records_list(c.unseen);
          return d;
        },
        py::arg("config") = "");

  m.def("train",
        [](const std::string& config, const std::string& checkpoint) {
          const ExperimentConfig cfg = parse_config(config);
          RunResult run;
          {
            py::gil_scoped_release release;
            const Corpus corpus = obtain_corpus(cfg);
            run = run_training(cfg, corpus.train);
            save_checkpoint(to_checkpoint(run), checkpoint);
          }
          py::list epochs;
          for (const auto& e : run.report.epochs) {
            py::dict d;
            d["phase"] = e.phase;
            d["epoch"] = e.epoch;
            d["diff_loss"] = e.diff_loss;
            d["nc_loss"] = e.nc_loss;
            d["nc_accuracy"] = e.nc_accuracy;
            epochs.append(d);
          }
          return epochs;
        },
        py::arg("config"), py::arg("checkpoint"), "Trains on the configured corpus and writes a checkpoint.");

  m.def("enhance",
        [](const std::string& checkpoint, const Array& noisy, std::size_t threads) {
          const RunResult run = from_checkpoint(load_checkpoint(checkpoint));
          const std::vector<Record> records = rows_as_records(noisy);
          std::vector<Signal> out;
          {
            py::gil_scoped_release release;
            out = enhance_records(run.model, run.schedule, records, run.config.sampler, threads);
          }
          return stack(out);
        },
        py::arg("checkpoint"), py::arg("noisy"), py::arg("threads") = 1);

  m.def("embed",
        [](const std::string& checkpoint, const Array& noisy) {
          const RunResult run = from_checkpoint(load_checkpoint(checkpoint));
          return stack(embeddings(run.model, rows_as_records(noisy)));
        },
        py::arg("checkpoint"), py::arg("noisy"));

  m.def("si_sdr", [](const Array& est, const Array& ref) { return si_sdr(to_vector(est), to_vector(ref)); },
        py::arg("est"), py::arg("ref"));
  m.def("seg_snr",
        [](const Array& est, const Array& ref, std::size_t frame, std::size_t hop) {
          return seg_snr(to_vector(est), to_vector(ref), frame, hop);
        },
        py::arg("est"), py::arg("ref"), py::arg("frame") = 64, py::arg("hop") = 32);
  m.def("separability",
        [](const Array& emb, const std::vector<int>& labels) {
          if (emb.ndim() != 2) throw std::invalid_argument("expected a 2-d array [points, features]");
          const auto rows = static_cast<std::size_t>(emb.shape(0)), cols = static_cast<std::size_t>(emb.shape(1));
          std::vector<std::vector<double>> x(rows);
          for (std::size_t i = 0; i < rows; ++i) x[i].assign(emb.data() + i * cols, emb.data() + (i + 1) * cols);
          return separability(x, labels);
        },
        py::arg("embeddings"), py::arg("labels"));
}
