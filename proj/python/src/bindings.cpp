#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

#include "ultranerf/cli.hpp"
#include "ultranerf/error.hpp"
#include "ultranerf/metrics.hpp"
#include "ultranerf/trainer.hpp"

namespace py = pybind11;
using namespace unerf;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Frame frame_from(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array shaped (width, depth)");
  Frame f(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(f.values.data(), a.data(), f.size() * sizeof(float));
  return f;
}

Array array_from(const Frame& f) {
  Array a({f.width, f.depth});
  std::memcpy(a.mutable_data(), f.values.data(), f.size() * sizeof(float));
  return a;
}

Pose pose_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& m) {
  if (m.size() != 16) throw GeometryError("pose must hold 16 values");
  return Pose::from_row_major(std::vector<double>(m.data(), m.data() + 16));
}

py::dict maps_dict(const render::ParamMaps& p) {
  py::dict d;
  for (int c = 0; c < 5; ++c) d[render::ParamMaps::kNames[c]] = array_from(p.channel(c));
  return d;
}

render::ParamMaps maps_from(const py::dict& d) {
  render::ParamMaps p;
  for (int c = 0; c < 5; ++c) p.channel(c) = frame_from(d[render::ParamMaps::kNames[c]].cast<Array>());
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differentiable ultrasound rendering";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def("ssim", [](const Array& a, const Array& b) { return metrics::ssim(frame_from(a), frame_from(b)); });
  m.def("combined_loss", [](const Array& a, const Array& b, double lambda) {
    metrics::LossConfig cfg;
    cfg.lambda = lambda;
    return metrics::combined_loss(frame_from(a), frame_from(b), cfg);
  }, py::arg("prediction"), py::arg("target"), py::arg("lam") = 0.9);

  m.def(
      "render",
      [](const py::dict& maps, const std::string& mode, std::uint64_t seed, std::uint64_t frame_id, double axial_step) {
        render::RenderConfig cfg;
        cfg.mode = render::sampling_mode_from_string(mode);
        cfg.seed = seed;
        cfg.axial_step = axial_step;
        const auto r = render::render_frame(maps_from(maps), cfg, frame_id);
        py::dict out;
        out["image"] = array_from(r.image);
        for (int c = 0; c < 6; ++c) out[render::IntermediateMaps::kNames[c]] = array_from(r.maps.channel(c));
        return out;
      },
      py::arg("maps"), py::arg("mode") = "expected", py::arg("seed") = 0, py::arg("frame_id") = 0,
      py::arg("axial_step") = 0.5,
      "Renders a B-mode frame from a dict of (width, depth) parameter maps keyed alpha, beta, rho_b, rho_s, phi.");

  py::class_<train::Checkpoint>(m, "Checkpoint")
      .def_static("load", [](const std::string& path) { return train::Checkpoint::load(path); })
      .def_property_readonly("variant", [](const train::Checkpoint& c) { return train::to_string(c.variant); })
      .def_property_readonly("iteration", [](const train::Checkpoint& c) { return c.iteration; })
      .def_property_readonly("frame_shape", [](const train::Checkpoint& c) { return py::make_tuple(c.frame.width, c.frame.depth); })
      .def(
          "render",
          [](const train::Checkpoint& c, const py::array_t<double, py::array::c_style | py::array::forcecast>& pose,
             const std::string& mode, std::uint64_t frame_id) {
            return array_from(train::render_novel_view(c, pose_from(pose), c.frame,
                                                       render::sampling_mode_from_string(mode), frame_id)
                                  .image);
          },
          py::arg("pose"), py::arg("mode") = "expected", py::arg("frame_id") = 0)
      .def("decompose", [](const train::Checkpoint& c, const py::array_t<double, py::array::c_style | py::array::forcecast>& pose) {
        return maps_dict(train::decompose(c, pose_from(pose), c.frame));
      });

  m.def("load_dataset", [](const std::string& dir) {
    const auto ds = data::load_dataset(dir);
    py::list sweeps;
    for (const auto& s : ds.sweeps) {
      py::dict d;
      d["id"] = s.id;
      d["view"] = phantom::to_string(s.view);
      d["split"] = phantom::to_string(s.split);
      d["tilt_deg"] = s.tilt_deg;
      py::list frames, poses;
      for (const auto& f : s.frames) frames.append(array_from(f));
      for (const auto& p : s.poses) {
        py::array_t<double> a({4, 4});
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) a.mutable_at(r, c) = p.matrix()(r, c);
        poses.append(a);
      }
      d["frames"] = frames;
      d["poses"] = poses;
      sweeps.append(d);
    }
    return sweeps;
  });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs an ultranerf subcommand in-process; returns (exit_code, stdout, stderr).");
}
