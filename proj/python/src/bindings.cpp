#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ps/cli.hpp"
#include "ps/detect.hpp"
#include "ps/error.hpp"
#include "ps/forecast.hpp"
#include "ps/hour_frame_io.hpp"
#include "ps/label.hpp"
#include "ps/preprocess.hpp"

namespace py = pybind11;
using namespace ps;

namespace {

LabelClass label_of(const std::string& name) {
  if (auto c = label_class_from_string(name)) return *c;
  throw py::value_error("unknown label class '" + name + "'");
}

DeviceKind kind_of(const std::string& name) {
  for (auto k : {DeviceKind::Reading, DeviceKind::Setting, DeviceKind::StatusBits, DeviceKind::Permit})
    if (to_string(k) == name) return k;
  throw py::value_error("unknown device kind '" + name + "'");
}

// Frame as a dict: values are [n_ticks, n_devices] float32.
py::dict frame_to_dict(const HourFrame& f) {
  py::array_t<float> values({static_cast<py::ssize_t>(f.n_ticks), static_cast<py::ssize_t>(f.n_devices())});
  auto v = values.mutable_unchecked<2>();
  for (std::size_t d = 0; d < f.n_devices(); ++d) {
    const auto col = f.column(d);
    for (std::size_t t = 0; t < f.n_ticks; ++t) v(static_cast<py::ssize_t>(t), static_cast<py::ssize_t>(d)) = col[t];
  }
  py::list devices;
  for (const auto& d : f.catalog.devices) devices.append(py::make_tuple(d.name, std::string(to_string(d.kind))));
  py::dict out;
  out["start_time"] = f.start_time;
  out["tick_rate_hz"] = f.catalog.tick_rate_hz;
  out["devices"] = devices;
  out["values"] = values;
  return out;
}

HourFrame frame_from_parts(const py::array_t<float, py::array::c_style | py::array::forcecast>& values,
                           const std::vector<std::pair<std::string, std::string>>& devices, std::uint64_t start_time,
                           std::uint32_t tick_rate_hz) {
  if (values.ndim() != 2 || static_cast<std::size_t>(values.shape(1)) != devices.size())
    throw py::value_error("values must be [n_ticks, n_devices]");
  DeviceCatalog cat;
  cat.tick_rate_hz = tick_rate_hz;
  for (const auto& [name, kind] : devices) cat.devices.push_back({name, kind_of(kind)});
  HourFrame f(cat, start_time, static_cast<std::uint32_t>(values.shape(0)));
  auto v = values.unchecked<2>();
  for (std::size_t d = 0; d < devices.size(); ++d) {
    auto col = f.column(d);
    for (std::size_t t = 0; t < f.n_ticks; ++t) col[t] = v(static_cast<py::ssize_t>(t), static_cast<py::ssize_t>(d));
  }
  return f;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Permit-loss forecasting and outage labeling";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("read_frame", [](const std::filesystem::path& p) { return frame_to_dict(load_hour_frame(p)); },
        py::arg("path"));
  m.def(
      "write_frame",
      [](const std::filesystem::path& p, const py::array_t<float, py::array::c_style | py::array::forcecast>& values,
         const std::vector<std::pair<std::string, std::string>>& devices, std::uint64_t start_time,
         std::uint32_t tick_rate_hz) { return save_hour_frame(frame_from_parts(values, devices, start_time, tick_rate_hz), p); },
      py::arg("path"), py::arg("values"), py::arg("devices"), py::arg("start_time") = 0,
      py::arg("tick_rate_hz") = kDefaultTickRate);
  m.def(
      "preprocess",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& values,
         const std::vector<std::pair<std::string, std::string>>& devices) {
        const auto d = frame_to_dict(preprocess_frame(frame_from_parts(values, devices, 0, kDefaultTickRate)));
        return py::object(d["values"]);
      },
      py::arg("values"), py::arg("devices"));

  m.def("window_count",
        [](std::int64_t length, int lookback, int gap, int horizon, int stride) {
          return dataset::Geometry{lookback, gap, horizon, stride}.window_count(length);
        },
        py::arg("length"), py::arg("lookback") = 30, py::arg("gap") = 30, py::arg("horizon") = 60,
        py::arg("stride") = 1);

  m.def("param_count",
        [](const std::string& kind, std::size_t n, int lookback, int horizon, int hidden, int layers) {
          forecast::ModelSpec s;
          s.kind = forecast::model_kind_from_string(kind);
          s.input_dim = n;
          s.lookback = lookback;
          s.horizon = horizon;
          s.hidden = hidden;
          s.layers = layers;
          return forecast::param_count(s);
        },
        py::arg("kind"), py::arg("n_features"), py::arg("lookback") = 30, py::arg("horizon") = 60,
        py::arg("hidden") = 25, py::arg("layers") = 2);

  m.def("canonicalize_label", [](const std::string& raw) { return std::string(to_string(canonicalize_label(raw))); });
  m.def("gini", [](const std::vector<std::size_t>& counts) { return label::gini(counts); });

  m.def(
      "confusion_scores",
      [](const std::vector<std::string>& truth, const std::vector<std::string>& predicted) {
        std::vector<LabelClass> t, p;
        for (const auto& s : truth) t.push_back(label_of(s));
        for (const auto& s : predicted) p.push_back(label_of(s));
        std::vector<LabelClass> classes;
        for (std::size_t c = 0; c < kNumLabelClasses; ++c) classes.push_back(static_cast<LabelClass>(c));
        const auto c = label::confusion(t, p, classes);
        return py::make_tuple(c.accuracy(), c.macro_f1());
      },
      py::arg("truth"), py::arg("predicted"), "Accuracy and macro-F1 over class names.");

  py::class_<label::ForestModel>(m, "Forest")
      .def_property_readonly("classes",
                             [](const label::ForestModel& f) {
                               std::vector<std::string> out;
                               for (auto c : f.classes) out.emplace_back(to_string(c));
                               return out;
                             })
      .def_property_readonly("n_trees", [](const label::ForestModel& f) { return f.trees.size(); })
      .def("classify",
           [](const label::ForestModel& f, const std::vector<double>& x) {
             const auto c = label::classify_forest(f, x);
             return py::make_tuple(std::string(to_string(c.label)), c.confidence);
           })
      .def("save", [](const label::ForestModel& f, const std::filesystem::path& p) { label::save_forest(f, p); })
      .def_static("load", [](const std::filesystem::path& p) { return label::load_forest(p); });

  m.def(
      "train_forest",
      [](const std::vector<std::vector<double>>& x, const std::vector<std::string>& y, int n_estimators,
         std::uint64_t seed) {
        std::vector<LabelClass> labels;
        for (const auto& s : y) labels.push_back(label_of(s));
        label::ForestConfig cfg;
        cfg.n_estimators = n_estimators;
        cfg.seed = seed;
        return label::train_forest(x, labels, cfg);
      },
      py::arg("x"), py::arg("y"), py::arg("n_estimators") = 200, py::arg("seed") = 0);

  m.def(
      "outage_histogram",
      [](const std::vector<std::int64_t>& durations_ticks, const std::vector<std::string>& labels, std::size_t n_bins) {
        if (!labels.empty() && labels.size() != durations_ticks.size())
          throw py::value_error("labels must match durations");
        std::vector<OutageEvent> ev(durations_ticks.size());
        for (std::size_t i = 0; i < ev.size(); ++i) {
          ev[i].duration_ticks = durations_ticks[i];
          if (!labels.empty()) ev[i].label = label_of(labels[i]);
        }
        const auto h = detect::outage_stats(ev, kDefaultTickRate, n_bins);
        py::dict counts;
        for (const auto& [c, v] : h.counts) counts[py::str(std::string(to_string(c)))] = v;
        return py::make_tuple(h.bin_edges_s, counts);
      },
      py::arg("durations_ticks"), py::arg("labels") = std::vector<std::string>{}, py::arg("n_bins") = 12);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv{"psentinel"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run_command(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a psentinel subcommand; returns (exit code, stdout, stderr).");
}
