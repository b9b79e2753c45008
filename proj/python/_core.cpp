#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bpt/common/crc32.hpp"
#include "bpt/common/error.hpp"
#include "bpt/experiments/dataset_io.hpp"
#include "bpt/experiments/experiments.hpp"
#include "bpt/nn/presets.hpp"

namespace py = pybind11;
using namespace bpt;

namespace {

// Python values are passed through str(), so 4, "4" and 0.5 all work.
experiments::ExperimentConfig to_config(const py::dict& values) {
  experiments::ConfigValues v;
  for (const auto& [key, value] : values) {
    if (py::isinstance<py::bool_>(value)) {
      v[py::str(key)] = value.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + std::string(py::str(item));
      v[py::str(key)] = joined;
    } else {
      v[py::str(key)] = py::str(value);
    }
  }
  return experiments::parse_config({}, v);
}

py::dict epoch_dict(const cluster::MetricsRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["makespan"] = r.makespan;
  d["sync_wait"] = r.sync_wait;
  d["transfers"] = r.transfers;
  d["comm_units"] = r.comm_units;
  d["comm_bytes"] = r.comm_bytes;
  d["balance"] = r.balance;
  d["accuracy"] = r.accuracy;
  d["auc"] = r.auc;
  d["version"] = r.version;
  return d;
}

py::dict report_dict(const cluster::RunReport& r) {
  py::dict d;
  py::list epochs;
  for (const auto& e : r.epochs) epochs.append(epoch_dict(e));
  d["epochs"] = epochs;
  d["iterations"] = r.iterations;
  d["iteration_times"] = r.iteration_times;
  d["versions"] = r.versions;
  d["rejected"] = r.rejected;
  d["transfers"] = r.transfers;
  d["comm_units"] = r.comm_units;
  d["comm_bytes"] = r.comm_bytes;
  d["makespan"] = r.makespan;
  d["sync_wait"] = r.sync_wait;
  d["compute_time"] = r.compute_time;
  d["balance"] = r.balance;
  d["alloc"] = r.plan.alloc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bi-layered parallel CNN training";
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  m.def("presets", [] {
    py::list out;
    for (const auto& row : nn::preset_table()) {
      py::dict d;
      d["name"] = std::string(row.name);
      d["conv_layers"] = row.conv_layers;
      d["filters"] = row.filters;
      d["fc_layers"] = row.fc_layers;
      d["fc_neurons"] = row.fc_neurons;
      out.append(d);
    }
    return out;
  });

  m.def("config_keys", [] {
    std::vector<std::string> keys;
    for (const auto& k : experiments::config_keys()) keys.emplace_back(k.name);
    return keys;
  });

  m.def("render_config", [](const py::dict& config) { return experiments::render_config(to_config(config)); },
        py::arg("config") = py::dict());

  m.def("parameter_count",
        [](const py::dict& config) { return nn::Network(to_config(config).network()).parameter_count(); },
        py::arg("config") = py::dict());

  m.def(
      "load_idx",
      [](const std::string& images, const std::string& labels, std::size_t classes, std::size_t limit) {
        const auto d = experiments::load_idx_dataset(images, labels, classes, limit);
        const nn::Shape3 s = d.empty() ? nn::Shape3{1, 0, 0} : d.samples[0].x.shape();
        py::array_t<double> x({d.size(), s.height, s.width});
        py::array_t<std::uint32_t> y(d.size());
        auto xs = x.mutable_unchecked<3>();
        auto ys = y.mutable_unchecked<1>();
        for (std::size_t k = 0; k < d.size(); ++k) {
          ys(k) = d.samples[k].label;
          for (std::size_t r = 0; r < s.height; ++r)
            for (std::size_t c = 0; c < s.width; ++c) xs(k, r, c) = d.samples[k].x.at(0, r, c);
        }
        return py::make_tuple(x, y);
      },
      py::arg("images"), py::arg("labels"), py::arg("classes") = 0, py::arg("limit") = 0);

  m.def(
      "gradcheck",
      [](const std::string& preset, std::uint64_t seed, std::size_t samples, std::optional<std::size_t> corrupt) {
        experiments::GradcheckOptions o;
        o.seed = seed;
        o.samples = samples;
        o.corrupt_parameter = corrupt;
        const auto r = experiments::gradcheck_command(experiments::gradcheck_network(preset), o);
        py::dict d;
        d["passed"] = r.passed;
        d["parameters"] = r.parameters;
        d["failed"] = r.report.failed;
        d["max_relative_error"] = r.report.max_relative_error;
        d["worst_index"] = r.report.worst_index;
        d["message"] = r.message;
        return d;
      },
      py::arg("preset") = "case1", py::arg("seed") = 1, py::arg("samples") = 4,
      py::arg("corrupt") = std::nullopt);

  m.def("workload_balance", [](const std::vector<double>& t) { return cluster::workload_balance(t); });

  m.def("remaining_iterations", [](std::size_t k, std::size_t batches, std::size_t total) {
    const auto b = partition::remaining_iterations(k, batches, total);
    return py::make_tuple(b.remaining, b.total);
  });

  m.def("crc32", [](const py::bytes& data) {
    const std::string s = data;
    return crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });

  m.def(
      "inspect_plan",
      [](const py::dict& config, std::size_t samples) {
        const auto c = to_config(config);
        const auto r = experiments::inspect_plan(c, nn::Network(c.network()), samples);
        py::dict d;
        d["alloc"] = r.plan.alloc;
        d["cumulative"] = r.plan.cumulative();
        d["total_iterations"] = r.total_iterations;
        d["batch_times"] = r.batch_times;
        return d;
      },
      py::arg("config"), py::arg("samples"));

  m.def(
      "train",
      [](const py::dict& config) {
        const auto c = to_config(config);
        const nn::Network net(c.network());
        const auto data = experiments::load_data(c);
        py::gil_scoped_release release;
        auto report = cluster::run_training(c.cluster, net, data.train, data.test ? &*data.test : nullptr);
        py::gil_scoped_acquire acquire;
        return report_dict(report);
      },
      py::arg("config"));

  m.def(
      "run_matrix",
      [](const py::dict& config, const std::string& out) {
        const auto c = to_config(config);
        const nn::Network net(c.network());
        const auto data = experiments::load_data(c);
        std::vector<experiments::RunOutcome> outcomes;
        {
          py::gil_scoped_release release;
          outcomes = experiments::run_experiment_matrix(c, net, data, out);
        }
        py::list result;
        for (const auto& o : outcomes) {
          py::dict d;
          d["tag"] = o.combination.tag();
          d["ok"] = o.ok;
          d["error"] = o.error;
          d["metrics"] = o.metrics.string();
          if (o.report) d["report"] = report_dict(*o.report);
          result.append(d);
        }
        return result;
      },
      py::arg("config"), py::arg("out"));
}
