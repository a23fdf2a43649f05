// Python bindings. Trajectories cross the boundary as dicts of numpy arrays;
// state columns follow the dataset file: X, Y, psi, u, vm, r.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "shipid/commands.hpp"
#include "shipid/dataset_io.hpp"
#include "shipid/datagen.hpp"
#include "shipid/evaluate.hpp"
#include "shipid/refmodel.hpp"
#include "shipid/training.hpp"

namespace py = pybind11;
using namespace shipid;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::dict to_dict(const Trajectory& t) {
  const auto n = static_cast<py::ssize_t>(t.size());
  Array times(n), states({n, py::ssize_t{6}}), controls({n, py::ssize_t{2}}),
      winds({n, py::ssize_t{2}});
  auto ts = times.mutable_unchecked<1>();
  auto xs = states.mutable_unchecked<2>();
  auto cs = controls.mutable_unchecked<2>();
  auto ws = winds.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const StateVector& x = t.states[k];
    ts(i) = t.t[k];
    xs(i, 0) = x.pose.X, xs(i, 1) = x.pose.Y, xs(i, 2) = x.pose.psi;
    xs(i, 3) = x.vel.u, xs(i, 4) = x.vel.vm, xs(i, 5) = x.vel.r;
    cs(i, 0) = t.controls[k].n, cs(i, 1) = t.controls[k].delta;
    ws(i, 0) = t.winds[k].U_A, ws(i, 1) = t.winds[k].gamma_a;
  }
  py::dict d;
  d["name"] = t.name;
  d["label"] = std::string(1, label_code(t.label));
  d["dt"] = t.dt;
  d["t"] = times;
  d["states"] = states;
  d["controls"] = controls;
  d["winds"] = winds;
  if (t.has_accels()) {
    Array acc({n, py::ssize_t{3}});
    auto as = acc.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i) {
      const Accel& a = t.accels[static_cast<std::size_t>(i)];
      as(i, 0) = a.du, as(i, 1) = a.dvm, as(i, 2) = a.dr;
    }
    d["accels"] = acc;
  } else {
    d["accels"] = py::none();
  }
  return d;
}

Array column_block(const py::dict& d, const char* key, py::ssize_t cols, py::ssize_t rows) {
  Array a = d[key].cast<Array>();
  const bool ok = cols == 0 ? (a.ndim() == 1 && a.shape(0) == rows)
                            : (a.ndim() == 2 && a.shape(0) == rows && a.shape(1) == cols);
  if (!ok) {
    throw UsageError(std::string("trajectory field '") + key + "' has the wrong shape");
  }
  return a;
}

Trajectory from_dict(const py::dict& d) {
  Trajectory t;
  t.name = d["name"].cast<std::string>();
  const auto code = d["label"].cast<std::string>();
  const auto label = code.size() == 1 ? label_from_code(code[0]) : std::nullopt;
  if (!label) {
    throw UsageError("unknown maneuver label '" + code + "'");
  }
  t.label = *label;
  t.dt = d["dt"].cast<double>();
  const Array times = d["t"].cast<Array>();
  const py::ssize_t n = times.ndim() == 1 ? times.shape(0) : -1;
  if (n < 0) {
    throw UsageError("trajectory field 't' must be one-dimensional");
  }
  const auto ts = times.unchecked<1>();
  const Array states = column_block(d, "states", 6, n);
  const Array controls = column_block(d, "controls", 2, n);
  const Array winds = column_block(d, "winds", 2, n);
  const auto xs = states.unchecked<2>();
  const auto cs = controls.unchecked<2>();
  const auto ws = winds.unchecked<2>();
  for (py::ssize_t i = 0; i < n; ++i) {
    t.t.push_back(ts(i));
    t.states.push_back({{xs(i, 0), xs(i, 1), xs(i, 2)}, {xs(i, 3), xs(i, 4), xs(i, 5)}});
    t.controls.push_back({cs(i, 0), cs(i, 1)});
    t.winds.push_back({ws(i, 0), ws(i, 1)});
  }
  if (d.contains("accels") && !d["accels"].is_none()) {
    const Array acc = column_block(d, "accels", 3, n);
    const auto as = acc.unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i) t.accels.push_back({as(i, 0), as(i, 1), as(i, 2)});
  }
  t.validate();
  return t;
}

py::list to_list(const Dataset& data) {
  py::list out;
  for (const auto& t : data.trajectories) out.append(to_dict(t));
  return out;
}

Dataset from_list(const py::list& items) {
  Dataset data;
  for (const auto& item : items) data.trajectories.push_back(from_dict(item.cast<py::dict>()));
  return data;
}

Model as_model(const py::object& obj) {
  if (py::isinstance<NetParams>(obj)) return obj.cast<NetParams>();
  if (py::isinstance<RefModelCoeffs>(obj)) return obj.cast<RefModelCoeffs>();
  throw UsageError("model must be a Network or a ReferenceModel");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ship maneuvering model identification core";
  m.attr("__version__") = SHIPID_VERSION;

  // Each error class becomes its own Python exception.
  static py::exception<Error> error(m, "ShipidError");
  static py::exception<UsageError> usage(m, "UsageError", error.ptr());
  static py::exception<IoError> io(m, "IoError", error.ptr());
  static py::exception<SchemaError> schema(m, "SchemaError", error.ptr());
  static py::exception<MalformedFileError> malformed(m, "MalformedFileError", error.ptr());
  static py::exception<NumericError> numeric(m, "NumericError", error.ptr());
  static py::exception<DivergenceError> divergence(m, "DivergenceError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      usage(e.what());
    } catch (const IoError& e) {
      io(e.what());
    } catch (const SchemaError& e) {
      schema(e.what());
    } catch (const MalformedFileError& e) {
      malformed(e.what());
    } catch (const NumericError& e) {
      numeric(e.what());
    } catch (const DivergenceError& e) {
      divergence(e.what());
    }
  });

  py::class_<RefModelCoeffs>(m, "ReferenceModel")
      .def_static("default", &default_coeffs)
      .def_static("load", [](const std::filesystem::path& p) { return read_coeffs(p); })
      .def("__eq__", [](const RefModelCoeffs& a, const RefModelCoeffs& b) {
        std::ostringstream x, y;
        write_coeffs(a, x);
        write_coeffs(b, y);
        return x.str() == y.str();
      })
      .def("dumps", [](const RefModelCoeffs& c) {
        std::ostringstream o;
        write_coeffs(c, o);
        return o.str();
      });

  py::class_<NetParams>(m, "Network")
      .def_static(
          "random",
          [](const std::string& arch, int hidden, int memory, std::uint64_t seed) {
            return NetParams::random(parse_arch(arch), hidden, memory, seed);
          },
          py::arg("arch"), py::arg("hidden"), py::arg("memory"), py::arg("seed"))
      .def_static("load", [](const std::filesystem::path& p) { return read_checkpoint(p); })
      .def("save", [](const NetParams& p, const std::filesystem::path& path) { write_checkpoint(p, path); })
      .def_property_readonly("arch", [](const NetParams& p) { return arch_name(p.arch); })
      .def_readonly("hidden", &NetParams::hidden)
      .def_readonly("memory", &NetParams::memory)
      .def("num_trainable", &NetParams::num_trainable)
      .def("flatten", &NetParams::flatten)
      .def("__eq__", &NetParams::operator==);

  m.def("generate",
        [](const std::string& preset, double total, std::uint64_t seed, double pos_sigma) {
          Recipe r = preset_recipe(preset);
          const double f = total / r.total_duration();
          for (auto& d : r.duration) d *= f;
          r.noise.pos_sigma = pos_sigma;
          return to_list(compose_dataset(r, default_coeffs(), seed));
        },
        py::arg("preset") = "TZRB", py::arg("total_duration") = 600.0, py::arg("seed") = 1,
        py::arg("pos_sigma") = 0.0,
        "Dataset drawn from a named recipe, rescaled to `total_duration` seconds.");

  m.def("read_dataset", [](const std::filesystem::path& p) { return to_list(read_dataset(p)); });
  m.def("write_dataset", [](const py::list& items, const std::filesystem::path& p) {
    write_dataset(from_list(items), p);
  });

  m.def("rollout",
        [](const py::object& model, const py::dict& traj, double restart_period) {
          RolloutOptions o;
          o.restart_period = restart_period > 0.0 ? restart_period : kNoRestart;
          o.policy = DivergencePolicy::Truncate;
          const RolloutResult r = rollout(as_model(model), from_dict(traj), o);
          py::dict out = to_dict(r.pred);
          out["diverged"] = r.diverged;
          out["segment_starts"] = r.segment_starts;
          return out;
        },
        py::arg("model"), py::arg("trajectory"), py::arg("restart_period") = 0.0,
        "Euler rollout; restart_period <= 0 means no restarts.");

  m.def("mse",
        [](const py::dict& pred, const py::dict& meas, const py::list& reference) {
          const Dataset ref = from_list(reference);
          const auto stats = StandardizationStats::compute(ref.trajectories, false);
          return mse(from_dict(pred), from_dict(meas), stats);
        },
        py::arg("pred"), py::arg("meas"), py::arg("reference"),
        "Standardized state MSE with sigmas taken from `reference` trajectories.");

  m.def("train",
        [](const py::list& items, const std::string& arch, const std::string& loss_kind,
           std::uint64_t seed, const py::dict& options) {
          TrainConfig c;
          for (const auto& [k, v] : options) {
            const auto key = k.cast<std::string>();
            if (key == "hidden") c.hidden = v.cast<int>();
            else if (key == "memory") c.memory = v.cast<int>();
            else if (key == "horizon") c.horizon = v.cast<int>();
            else if (key == "batch_size") c.batch_size = v.cast<int>();
            else if (key == "learning_rate") c.learning_rate = v.cast<double>();
            else if (key == "max_epochs") c.max_epochs = v.cast<int>();
            else if (key == "patience") c.patience = v.cast<int>();
            else if (key == "stride") c.stride = v.cast<std::size_t>();
            else if (key == "val_fraction") c.val_fraction = v.cast<double>();
            else if (key == "scale_io") c.scale_io = v.cast<bool>();
            else throw UsageError("unknown training option '" + key + "'");
          }
          const Dataset data = from_list(items);
          TrainResult r;
          {
            py::gil_scoped_release nogil;
            r = train(data, c, parse_loss(loss_kind), parse_arch(arch), seed);
          }
          py::list log;
          for (const auto& e : r.log) {
            log.append(py::make_tuple(e.epoch, e.train_loss, e.val_loss));
          }
          return py::make_tuple(r.params, log);
        },
        py::arg("dataset"), py::arg("arch") = "finite", py::arg("loss") = "state",
        py::arg("seed") = 1, py::arg("options") = py::dict(),
        "Returns (network, [(epoch, train_loss, val_loss), ...]).");

  m.def("sha256_file", &sha256_file);
}
