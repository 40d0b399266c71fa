#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "clens/cli.hpp"
#include "clens/error.hpp"
#include "clens/manifest.hpp"
#include "clens/proba_log.hpp"
#include "clens/scoring.hpp"

namespace py = pybind11;
using namespace clens;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

ProbLog log_from_array(const std::string& model_id, const F32Array& probs) {
  if (probs.ndim() != 3) throw Error(ErrorCode::ShapeMismatch, "probabilities must have shape (T, N, C)");
  ProbLog log;
  log.model_id = model_id;
  log.n_epochs = static_cast<std::uint32_t>(probs.shape(0));
  log.n_samples = static_cast<std::uint32_t>(probs.shape(1));
  log.n_classes = static_cast<std::uint32_t>(probs.shape(2));
  log.probs.assign(probs.data(), probs.data() + probs.size());
  validate_and_normalize(log);
  return log;
}

py::tuple log_to_tuple(const ProbLog& log) {
  F32Array out({log.n_epochs, log.n_samples, log.n_classes});
  std::copy(log.probs.begin(), log.probs.end(), out.mutable_data());
  return py::make_tuple(log.model_id, out);
}

std::string spec_json(const ManifestSpec& spec) { return manifest_to_json(spec).dump(2); }

ManifestSpec spec_from(const std::string& text) {
  const auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::SchemaError, "manifest is not valid JSON");
  return manifest_from_json(doc);
}

}  // namespace

PYBIND11_MODULE(_clens, m) {
  m.doc() = "Ensemble confusion scores: CPL files, labels, metrics and manifests.";

  static py::exception<Error> clens_error(m, "ClensError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = py::reinterpret_borrow<py::object>(clens_error.ptr());
      py::object err = type(std::string(e.what()));
      err.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(clens_error.ptr(), err.ptr());
    }
  });

  m.def("encode_cpl", [](const std::string& model_id, const F32Array& probs) {
    return py::bytes(encode_cpl(log_from_array(model_id, probs)));
  }, py::arg("model_id"), py::arg("probs"));
  m.def("decode_cpl", [](const py::bytes& data) { return log_to_tuple(decode_cpl(std::string(data))); },
        "Returns (model_id, float32 array of shape (T, N, C)).");
  m.def("write_cpl", [](const std::filesystem::path& path, const std::string& model_id, const F32Array& probs) {
    write_cpl(log_from_array(model_id, probs), path);
  }, py::arg("path"), py::arg("model_id"), py::arg("probs"));
  m.def("read_cpl", [](const std::filesystem::path& path) { return log_to_tuple(read_cpl(path)); });
  m.def("cpl_file_size", [](std::uint32_t t, std::uint32_t n, std::uint32_t c, const std::string& model_id) {
    ProbLog log;
    log.model_id = model_id;
    log.n_epochs = t;
    log.n_samples = n;
    log.n_classes = c;
    return cpl_file_size(log);
  }, py::arg("n_epochs"), py::arg("n_samples"), py::arg("n_classes"), py::arg("model_id"));

  m.def("format_labels", &format_labels);
  m.def("parse_labels", &parse_labels, py::arg("text"), py::arg("expected_n"), py::arg("n_classes"));

  m.def("parse_metrics", [](const std::string& text) {
    py::list rows;
    for (const auto& r : parse_metrics(text).rows) rows.append(py::make_tuple(r.epoch, r.dataset, r.loss, r.accuracy));
    return rows;
  }, "Rows as (epoch, dataset, loss, accuracy).");
  m.def("format_metrics", [](const std::vector<std::tuple<std::uint32_t, std::string, double, double>>& rows) {
    MetricsSeries s;
    for (const auto& [epoch, dataset, loss, acc] : rows) s.rows.push_back({epoch, dataset, loss, acc});
    validate_metrics(s);
    return format_metrics(s);
  });

  m.def("normalize_manifest", [](const std::string& text) { return spec_json(spec_from(text)); },
        "Validates a manifest or fragment and returns its canonical JSON.");
  m.def("merge_manifests", [](const std::string& a, const std::string& b) {
    return spec_json(merge_manifests(spec_from(a), spec_from(b)));
  });

  m.def("entropy", [](const std::vector<double>& p) { return entropy(p); });
  m.def("confusion_scores", [](const std::vector<F32Array>& runs, std::uint32_t first, std::uint32_t last) {
    std::vector<ProbLog> logs;
    for (std::size_t k = 0; k < runs.size(); ++k) logs.push_back(log_from_array("run" + std::to_string(k), runs[k]));
    if (logs.empty()) throw Error(ErrorCode::DimensionZero, "need at least one run");
    const auto view = EnsembleView::of(logs);
    return confusion_scores(view, {first, last});
  }, py::arg("runs"), py::arg("first"), py::arg("last"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, "Runs a clens subcommand in-process; returns (exit_code, stdout, stderr).");
}
