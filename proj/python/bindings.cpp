#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "neo/dataset.hpp"
#include "neo/error.hpp"
#include "neo/evaluation.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"
#include "neo/parallel.hpp"
#include "neo/pipeline.hpp"
#include "neo/pose_sampling.hpp"
#include "neo/radiance_field.hpp"

namespace py = pybind11;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

namespace {

neo::ImageBuffer to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw py::value_error("expected an H x W x 3 float array");
  }
  neo::ImageBuffer img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.data().data(), a.data(), img.size() * sizeof(float));
  return img;
}

FloatArray to_array(const neo::ImageBuffer& img) {
  FloatArray a({img.height(), img.width(), 3});
  std::memcpy(a.mutable_data(), img.data().data(), img.size() * sizeof(float));
  return a;
}

neo::PixelMask to_mask(const std::optional<ByteArray>& m) {
  if (!m) return {};
  return {m->data(), m->data() + m->size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Field-of-view extrapolation core";

  auto error = py::register_exception<neo::Error>(m, "NeoError", PyExc_RuntimeError);
  (void)error;

  m.def("set_thread_count", &neo::set_thread_count, py::arg("threads"));

  py::class_<neo::Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init([](const neo::Mat3& r, const neo::Vec3& t) {
             neo::Pose p{r, t};
             p.validate(1e-6);
             return p;
           }),
           py::arg("rotation"), py::arg("translation"))
      .def_readwrite("rotation", &neo::Pose::rotation)
      .def_readwrite("translation", &neo::Pose::translation)
      .def("transform", &neo::Pose::transform)
      .def("__repr__", [](const neo::Pose& p) {
        const auto d = neo::dofs_from_pose(p);
        return "Pose(x=" + std::to_string(d.x) + ", y=" + std::to_string(d.y) +
               ", z=" + std::to_string(d.z) + ", yaw=" + std::to_string(d.yaw_deg) + ")";
      });

  m.def("pose_from_dofs", &neo::pose_from_dofs, py::arg("x"), py::arg("y"), py::arg("z"),
        py::arg("yaw_deg"), py::arg("pitch_deg") = 0.0, py::arg("roll_deg") = 0.0);
  m.def(
      "dofs_from_pose",
      [](const neo::Pose& p) {
        const auto d = neo::dofs_from_pose(p);
        py::dict out;
        out["x"] = d.x;
        out["y"] = d.y;
        out["z"] = d.z;
        out["yaw_deg"] = d.yaw_deg;
        out["pitch_deg"] = d.pitch_deg;
        out["roll_deg"] = d.roll_deg;
        return out;
      },
      py::arg("pose"));

  py::class_<neo::CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double f, int w, int h) {
             neo::CameraIntrinsics c{f, w, h};
             c.validate();
             return c;
           }),
           py::arg("focal_px"), py::arg("width"), py::arg("height"))
      .def_readwrite("focal_px", &neo::CameraIntrinsics::focal_px)
      .def_readwrite("width", &neo::CameraIntrinsics::width)
      .def_readwrite("height", &neo::CameraIntrinsics::height)
      .def("scaled", &neo::CameraIntrinsics::scaled, py::arg("factor"))
      .def("fov", [](const neo::CameraIntrinsics& c) {
        const auto f = neo::fov_from_intrinsics(c);
        return py::make_tuple(f.x_deg, f.y_deg);
      })
      .def(py::self == py::self)
      .def("__repr__", [](const neo::CameraIntrinsics& c) {
        return "CameraIntrinsics(focal_px=" + std::to_string(c.focal_px) +
               ", width=" + std::to_string(c.width) + ", height=" + std::to_string(c.height) +
               ")";
      });

  m.def("extend_intrinsics", &neo::extend_intrinsics, py::arg("intr"),
        py::arg("target_fov_x_deg"), py::arg("target_fov_y_deg"));
  m.def("central_offset", &neo::central_offset, py::arg("small"), py::arg("large"));
  m.def(
      "ray_for_pixel",
      [](const neo::Pose& p, const neo::CameraIntrinsics& c, double x, double y) {
        const auto r = neo::ray_for_pixel(p, c, x, y);
        return py::make_tuple(r.origin, r.direction);
      },
      py::arg("pose"), py::arg("intr"), py::arg("x"), py::arg("y"));

  // Images are H x W x 3 float32 arrays in [0, 1].
  m.def("read_png", [](const std::filesystem::path& p) { return to_array(neo::from_rgb8(neo::read_png(p))); },
        py::arg("path"));
  m.def("write_png", [](const std::filesystem::path& p, const FloatArray& a) {
    neo::write_png(p, to_image(a));
  }, py::arg("path"), py::arg("image"));
  m.def("quantize", [](const FloatArray& a) { return to_array(neo::quantize(to_image(a))); },
        py::arg("image"));
  m.def("blur_score", [](const FloatArray& a) { return neo::blur_score(to_image(a)); },
        py::arg("image"));

  m.def(
      "band_mask",
      [](const neo::CameraIntrinsics& small, const neo::CameraIntrinsics& large) {
        const auto mask = neo::band_mask(small, large);
        ByteArray a({large.height, large.width});
        std::memcpy(a.mutable_data(), mask.data(), mask.size());
        return a;
      },
      py::arg("small"), py::arg("large"));
  m.def(
      "psnr",
      [](const FloatArray& a, const FloatArray& b, const std::optional<ByteArray>& mask) {
        return neo::psnr(to_image(a), to_image(b), to_mask(mask));
      },
      py::arg("a"), py::arg("b"), py::arg("mask") = py::none());
  m.def(
      "ssim",
      [](const FloatArray& a, const FloatArray& b, const std::optional<ByteArray>& mask) {
        return neo::ssim(to_image(a), to_image(b), to_mask(mask));
      },
      py::arg("a"), py::arg("b"), py::arg("mask") = py::none());

  py::class_<neo::WalkableArea>(m, "WalkableArea")
      .def_static("rectangle", &neo::WalkableArea::rectangle, py::arg("min"), py::arg("max"),
                  py::arg("cell"))
      .def_property_readonly("nx", &neo::WalkableArea::nx)
      .def_property_readonly("ny", &neo::WalkableArea::ny)
      .def_property_readonly("cell_size", &neo::WalkableArea::cell_size)
      .def("walkable_count", &neo::WalkableArea::walkable_count)
      .def("contains", &neo::WalkableArea::contains, py::arg("x"), py::arg("y"));

  m.def(
      "grid_positions",
      [](const neo::WalkableArea& w, double interval) {
        const auto pts = neo::grid_positions(w, interval);
        py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
        auto r = a.mutable_unchecked<2>();
        for (std::size_t i = 0; i < pts.size(); ++i) {
          r(i, 0) = pts[i].x();
          r(i, 1) = pts[i].y();
        }
        return a;
      },
      py::arg("walkable"), py::arg("interval"));
  m.def("yaw_sweep", &neo::yaw_sweep, py::arg("k"));
  m.def(
      "sample_poses",
      [](const neo::WalkableArea& w, double interval, int yaw_count, std::uint64_t seed,
         double z, const std::vector<neo::Pose>& anchors, std::optional<double> threshold) {
        neo::SamplerConfig cfg;
        cfg.interval = interval;
        cfg.yaw_count = yaw_count;
        cfg.seed = seed;
        cfg.coverage_threshold = threshold;
        neo::DofDistribution dof;
        dof[neo::Dof::Z] = neo::DofSpec::fixed(z);
        std::vector<neo::Pose> out;
        for (const auto& s : neo::sample_poses(w, cfg, dof, anchors)) out.push_back(s.pose);
        return out;
      },
      py::arg("walkable"), py::arg("interval"), py::arg("yaw_count"), py::arg("seed") = 0,
      py::arg("z") = 1.5, py::arg("anchors") = std::vector<neo::Pose>{},
      py::arg("coverage_threshold") = py::none());
  m.def("coverage_mask", &neo::coverage_mask, py::arg("candidates"), py::arg("anchors"),
        py::arg("threshold"));

  py::class_<neo::RenderConfig>(m, "RenderConfig")
      .def(py::init<>())
      .def_readwrite("samples", &neo::RenderConfig::samples)
      .def_readwrite("near", &neo::RenderConfig::near)
      .def_readwrite("far", &neo::RenderConfig::far)
      .def_readwrite("background", &neo::RenderConfig::background)
      .def_readwrite("min_transmittance", &neo::RenderConfig::min_transmittance);

  py::class_<neo::VoxelRadianceField>(m, "VoxelRadianceField")
      .def_static(
          "constant",
          [](const neo::Vec3& lo, const neo::Vec3& hi, std::array<int, 3> dims, double density,
             double color) {
            return neo::VoxelRadianceField::constant({lo, hi}, dims, density, color);
          },
          py::arg("min"), py::arg("max"), py::arg("dims"), py::arg("density") = 0.01,
          py::arg("color") = 0.5)
      .def_static("load", &neo::VoxelRadianceField::load, py::arg("path"))
      .def("save", &neo::VoxelRadianceField::save, py::arg("path"))
      .def_property_readonly("dims", &neo::VoxelRadianceField::dims)
      .def("query", [](const neo::VoxelRadianceField& f, const neo::Vec3& p) {
        const auto s = f.query(p);
        return py::make_tuple(s.density, s.color);
      }, py::arg("point"))
      .def(
          "render",
          [](const neo::VoxelRadianceField& f, const neo::Pose& pose,
             const neo::CameraIntrinsics& intr, const neo::RenderConfig& cfg) {
            neo::ImageBuffer img;
            {
              py::gil_scoped_release release;
              img = neo::render_view(f, pose, intr, cfg);
            }
            return to_array(img);
          },
          py::arg("pose"), py::arg("intr"), py::arg("render") = neo::RenderConfig{});

  py::class_<neo::PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("seed", &neo::PipelineConfig::seed)
      .def_readwrite("output_dir", &neo::PipelineConfig::output_dir)
      .def("to_json", [](const neo::PipelineConfig& c) { return nlohmann::json(c).dump(); })
      .def_static("from_json", [](const std::string& s) {
        auto c = nlohmann::json::parse(s).get<neo::PipelineConfig>();
        c.validate();
        return c;
      }, py::arg("text"));
  m.def("load_config", &neo::load_config, py::arg("path"));

  using neo::Pipeline;
  const auto no_gil = py::call_guard<py::gil_scoped_release>();
  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](neo::PipelineConfig cfg, const std::filesystem::path& out, bool force) {
             return Pipeline(std::move(cfg), out, force);
           }),
           py::arg("config"), py::arg("out"), py::arg("force") = false)
      .def_property_readonly("out", &Pipeline::out)
      .def("stage_hash", &Pipeline::stage_hash, py::arg("stage"))
      .def("stage_dir", &Pipeline::stage_dir, py::arg("stage"))
      .def("scene_gen", &Pipeline::scene_gen, no_gil)
      .def("render_train", &Pipeline::render_train, no_gil)
      .def("fit_field", &Pipeline::fit_field, no_gil)
      .def("sample_poses", &Pipeline::sample_poses, no_gil)
      .def("gen_dataset", &Pipeline::gen_dataset, no_gil)
      .def("train_outpainter", &Pipeline::train_outpainter, no_gil)
      .def("train_naive", &Pipeline::train_naive, no_gil)
      .def("run_baselines", &Pipeline::run_baselines, no_gil)
      .def("eval", &Pipeline::eval, no_gil)
      .def("run_all", &Pipeline::run_all, no_gil)
      .def("load_field", &Pipeline::load_field, no_gil);

  m.def("read_report_json",
        [](const std::filesystem::path& p) { return nlohmann::json(neo::read_report(p)).dump(); },
        py::arg("path"));
}
