#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fscd/errors.hpp"
#include "fscd/gates.hpp"
#include "fscd/hash.hpp"
#include "fscd/version.hpp"
#include "fscd/workflow.hpp"

namespace py = pybind11;
using namespace fscd;

namespace {

// JSON crosses the boundary as text; the Python side owns the parsing.
TrainConfig config_from(const std::string& text) {
  return text.empty() ? TrainConfig{} : TrainConfig::from_json(nlohmann::json::parse(text));
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> a(shape);
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Complexity-aware feature-field selection for pre-ranking models";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "FscdError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  m.def(
      "complexity",
      [](double o, std::uint32_t e, std::uint64_t n) {
        FeatureField f;
        f.online_cost = o;
        f.embed_dim = e;
        f.num_keys = n;
        return complexity(f, ComplexityParams{});
      },
      py::arg("o"), py::arg("e"), py::arg("n"));
  m.def("prior_theta", &prior_theta, py::arg("c"));
  m.def("reg_weight_alpha", &reg_weight_alpha, py::arg("theta"));
  m.def("sample_gate", &sample_gate, py::arg("delta"), py::arg("u"), py::arg("t") = kDefaultTemperature);

  m.def("auc", [](const std::vector<double>& s, const std::vector<std::uint8_t>& y) { return auc(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def(
      "recall_rate",
      [](const std::vector<double>& ref, const std::vector<double>& pre, std::size_t pass_k, std::size_t top_m) {
        return recall_rate(ref, pre, pass_k, top_m);
      },
      py::arg("reference"), py::arg("preranking"), py::arg("pass_k"), py::arg("top_m") = 5);

  py::class_<FeatureCatalog>(m, "FeatureCatalog")
      .def_static("load", &FeatureCatalog::load)
      .def_static("from_json", [](const std::string& s) { return FeatureCatalog::from_json(nlohmann::json::parse(s)); })
      .def("to_json", [](const FeatureCatalog& c) { return c.to_json().dump(); })
      .def("save", &FeatureCatalog::save)
      .def("__len__", &FeatureCatalog::size)
      .def_property_readonly("names",
                             [](const FeatureCatalog& c) {
                               std::vector<std::string> n;
                               for (const auto& f : c.fields()) n.push_back(f.name);
                               return n;
                             })
      .def_property_readonly("types",
                             [](const FeatureCatalog& c) {
                               std::vector<std::string> t;
                               for (const auto& f : c.fields()) t.emplace_back(to_string(f.type));
                               return t;
                             })
      .def("complexities", &FeatureCatalog::complexities)
      .def("hash", [](const FeatureCatalog& c) { return hex64(c.hash()); })
      .def(
          "request_cost",
          [](const FeatureCatalog& c, const std::vector<std::size_t>& sel, std::size_t n_items) {
            return request_cost(c, sel, CostModel{n_items});
          },
          py::arg("selected"), py::arg("n_items") = 200);

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", &Dataset::load, py::arg("path"), py::arg("catalog"))
      .def("save_binary", &Dataset::save_binary)
      .def("save_csv", &Dataset::save_csv)
      .def("__len__", &Dataset::size)
      .def_property_readonly("num_fields", [](const Dataset& d) { return d.num_fields; })
      .def_property_readonly("keys",
                             [](const Dataset& d) {
                               return to_array(d.keys, {static_cast<py::ssize_t>(d.size()),
                                                        static_cast<py::ssize_t>(d.num_fields)});
                             })
      .def_property_readonly("labels",
                             [](const Dataset& d) {
                               return to_array(d.labels, {static_cast<py::ssize_t>(d.size())});
                             })
      .def_property_readonly("latent",
                             [](const Dataset& d) {
                               return to_array(d.latent, {static_cast<py::ssize_t>(d.latent.size())});
                             })
      .def("positive_rate", &Dataset::positive_rate)
      .def("hash", [](const Dataset& d) { return hex64(d.hash()); });

  m.def(
      "standard_benchmark",
      [](bool heldout) {
        const auto b = standard_benchmark();
        return py::make_tuple(b.catalog, generate(b.catalog, b.spec, heldout ? Split::Heldout : Split::Train));
      },
      py::arg("heldout") = false,
      "(catalog, dataset) for the built-in 20-field benchmark");
  m.def(
      "generate",
      [](const std::string& spec_json, bool heldout) {
        const auto b = gen_spec_from_json(nlohmann::json::parse(spec_json));
        return py::make_tuple(b.catalog, generate(b.catalog, b.spec, heldout ? Split::Heldout : Split::Train));
      },
      py::arg("spec_json"), py::arg("heldout") = false);

  m.def("default_config", [] { return TrainConfig{}.to_json().dump(); });

  m.def(
      "run",
      [](const FeatureCatalog& catalog, const Dataset& train, const Dataset& heldout, const std::string& config,
         bool with_reference) {
        const TrainConfig c = config_from(config);
        std::string report;
        {
          py::gil_scoped_release release;
          report = execute_run(catalog, train, heldout, c, CostModel{}, RecallConfig{}, with_reference)
                       .report.to_json()
                       .dump();
        }
        return report;
      },
      py::arg("catalog"), py::arg("train"), py::arg("heldout"), py::arg("config") = "",
      py::arg("with_reference") = false, "Runs selection and fine-tuning; returns the report as JSON text");

  m.def(
      "sweep",
      [](const FeatureCatalog& catalog, const Dataset& train, const Dataset& heldout,
         const std::vector<std::size_t>& k_list, const std::string& config) {
        const TrainConfig c = config_from(config);
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          const auto sel = train_selection(catalog, train, c);
          rows = sweep(catalog, sel, train, heldout, c, CostModel{}, k_list);
        }
        std::vector<py::tuple> out;
        for (const auto& r : rows) out.push_back(py::make_tuple(r.k, r.auc, r.cost));
        return out;
      },
      py::arg("catalog"), py::arg("train"), py::arg("heldout"), py::arg("k_list"), py::arg("config") = "");
}
