#include <iostream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tsfn/error.hpp"
#include "tsfn/experiment.hpp"

namespace py = pybind11;
using namespace tsfn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& x) {
  if (x.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(x.shape(0)), c = static_cast<std::size_t>(x.shape(1));
  return Matrix(r, c, std::vector<double>(x.data(), x.data() + r * c));
}

Tensor3 to_tensor(const Array& x) {
  if (x.ndim() != 3) throw ShapeError("expected a 3-d array (channels, height, width)");
  const auto c = static_cast<std::size_t>(x.shape(0)), h = static_cast<std::size_t>(x.shape(1)),
             w = static_cast<std::size_t>(x.shape(2));
  return Tensor3(c, h, w, std::vector<double>(x.data(), x.data() + c * h * w));
}

std::span<const double> to_span(const Array& x) {
  if (x.ndim() != 1) throw ShapeError("expected a 1-d array");
  return {x.data(), static_cast<std::size_t>(x.shape(0))};
}

py::array_t<double> from_vector(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> from_matrix(const Matrix& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> from_tensor(const Tensor3& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.channels()), static_cast<py::ssize_t>(t.height()),
                           static_cast<py::ssize_t>(t.width())});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<std::complex<double>> from_complex(const std::vector<Complex>& v) {
  py::array_t<std::complex<double>> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

StreamFeatures features(const Array& app, const Array& mot, const Array& ego) {
  return {to_tensor(app), to_tensor(mot), to_tensor(ego)};
}

// Python dict values may be any scalar; the core expects strings.
KeyValues to_key_values(const py::dict& d) {
  KeyValues kv;
  for (const auto& [k, v] : d) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else {
      value = py::str(v).cast<std::string>();
    }
    kv[py::str(k).cast<std::string>()] = value;
  }
  return kv;
}

ExperimentConfig to_config(const py::dict& d) { return ExperimentConfig::from_key_values(to_key_values(d)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Three-stream correlation fusion core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("rank1_approx", [](const Array& x) {
    const Rank1Pair p = rank1_approx(to_matrix(x));
    return py::make_tuple(from_vector(p.a), from_vector(p.b));
  }, py::arg("x"), "Best rank-1 factors (a, b) with x ~ outer(a, b).");

  m.def("fft", [](const Array& v) { return from_complex(fft(to_span(v))); }, py::arg("v"));
  m.def("dft_naive", [](const Array& v) { return from_complex(dft_naive(to_span(v))); }, py::arg("v"));

  m.def("tscf_fuse", [](const Array& app, const Array& mot, const Array& ego, bool trace) -> py::object {
    const StreamFeatures f = features(app, mot, ego);
    if (!trace) return from_vector(tscf_fuse(f));
    TscfTrace t;
    const CorrelationVector v = tscf_fuse(f, &t);
    py::dict d;
    d["f_spa"] = from_tensor(t.f_spa);
    d["f_tmo"] = from_tensor(t.f_tmo);
    d["a"] = from_matrix(t.a);
    d["b"] = from_matrix(t.b);
    d["c"] = from_matrix(t.c);
    return py::make_tuple(from_vector(v), d);
  }, py::arg("app"), py::arg("mot"), py::arg("ego"), py::arg("trace") = false);

  m.def("baseline_fuse", [](const Array& app, const Array& mot, const Array& ego, const std::string& method) {
    return from_vector(baseline_fuse(features(app, mot, ego), parse_fusion_method(method)));
  }, py::arg("app"), py::arg("mot"), py::arg("ego"), py::arg("method"));

  m.def("fuse_streams", [](const Array& app, const Array& mot, const Array& ego, const std::string& method,
                           const std::string& streams) {
    return from_vector(fuse_streams(features(app, mot, ego), parse_fusion_method(method),
                                    parse_stream_set(streams)));
  }, py::arg("app"), py::arg("mot"), py::arg("ego"), py::arg("method") = "tscf", py::arg("streams") = "all");

  m.def("interval_encode", [](const Array& v, const std::string& spectrum, bool pad) {
    return from_vector(interval_encode(to_span(v), parse_spectrum_mode(spectrum), pad).values);
  }, py::arg("v"), py::arg("spectrum") = "magnitude", py::arg("pad") = false);

  m.def("generate_dataset", [](const std::filesystem::path& out, const py::dict& spec) {
    const Dataset d = generate_dataset(SyntheticSpec::from_key_values(to_key_values(spec)), out);
    return py::make_tuple(d.classes, d.clips.size());
  }, py::arg("out"), py::arg("spec") = py::dict(), "Writes a synthetic dataset; returns (classes, clips).");

  m.def("config_defaults", [](const std::string& preset) {
    return (preset == "paper" ? ExperimentConfig::paper_shape() : ExperimentConfig::desk()).to_key_values();
  }, py::arg("preset") = "desk");

  m.def("set_progress", [](bool on) { set_progress_stream(on ? &std::cerr : nullptr); }, py::arg("on"));

  // Reports cross the boundary as JSON text; the package wrapper decodes it.
  m.def("run_experiment", [](const py::dict& config) {
    const ExperimentConfig cfg = to_config(config);
    py::gil_scoped_release release;
    return run_experiment(cfg).to_json();
  }, py::arg("config"));
  m.def("evaluate_saved", [](const py::dict& config) {
    const ExperimentConfig cfg = to_config(config);
    py::gil_scoped_release release;
    return evaluate_saved(cfg).to_json();
  }, py::arg("config"));
  m.def("ablate", [](const py::dict& config, const std::string& streams) {
    const ExperimentConfig cfg = to_config(config);
    const StreamSet set = parse_stream_set(streams);
    py::gil_scoped_release release;
    return ablate(cfg, set).to_json();
  }, py::arg("config"), py::arg("streams"));
  m.def("read_report", [](const std::filesystem::path& dir) { return read_report(dir).to_json(); },
        py::arg("dir"));
}
