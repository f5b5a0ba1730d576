#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "compdiff/config.hpp"
#include "compdiff/errors.hpp"
#include "compdiff/experiments.hpp"
#include "compdiff/gmm.hpp"

namespace py = pybind11;
using namespace compdiff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

// Accepts (H, W) or (H, W, C).
ImageGrid to_grid(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected an (H, W) or (H, W, C) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return ImageGrid(h, w, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ImageGrid& g) {
  Array out({g.height(), g.width(), g.channels()});
  std::copy(g.values().begin(), g.values().end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> to_array(const BinaryGrid& g) {
  py::array_t<std::uint8_t> out({g.height(), g.width()});
  std::copy(g.values().begin(), g.values().end(), out.mutable_data());
  return out;
}

SegmentLayout to_layout(const Labels& a) {
  if (a.ndim() != 2) throw ShapeError("layout must be a 2-D integer array");
  return SegmentLayout(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                       std::vector<int>(a.data(), a.data() + a.size()));
}

// Models and scene for one config file, loaded once.
class Session {
 public:
  explicit Session(const std::filesystem::path& config_path)
      : cfg_(load_run_config(config_path)),
        scene_(load_scene(cfg_)),
        schedule_(config_schedule(cfg_)),
        vocab_(config_vocabulary(cfg_)),
        denoiser_(load_weights(cfg_.denoiser_path)) {
    if (std::filesystem::exists(cfg_.classifier_path)) classifier_.emplace(load_classifier(cfg_.classifier_path));
  }

  Array generate(std::uint64_t seed, std::optional<double> kappa) const {
    return to_array(generate_composite(ctx(), kappa.value_or(cfg_.kappa), seed));
  }
  Array text_to_image(std::uint64_t seed) const { return to_array(generate_text_to_image(ctx(), seed)); }
  Array serial(std::uint64_t seed) const { return to_array(generate_serial(ctx(), seed)); }

  py::dict evaluate(const Array& image, std::uint64_t seed, double kappa, const std::string& mode) const {
    if (!classifier_) throw ConfigError("no classifier at " + cfg_.classifier_path.string());
    const MetricsReport r = compdiff::evaluate(ctx(), to_grid(image), seed, kappa, mode);
    py::dict d;
    d["content_fidelity"] = r.content_fidelity;
    d["spatial_fidelity"] = r.spatial_fidelity;
    d["technical_quality"] = r.technical_quality;
    d["blending"] = r.blending;
    return d;
  }

  Labels layout() const {
    Labels out({scene_.layout.height(), scene_.layout.width()});
    std::copy(scene_.layout.ids().begin(), scene_.layout.ids().end(), out.mutable_data());
    return out;
  }
  std::string resolved_config() const { return resolved_config_json(cfg_); }

 private:
  RunContext ctx() const {
    return RunContext{&cfg_, &scene_, &schedule_, &denoiser_, classifier_ ? &*classifier_ : nullptr, &vocab_};
  }

  RunConfig cfg_;
  Scene scene_;
  NoiseSchedule schedule_;
  Vocabulary vocab_;
  ToyDenoiser denoiser_;
  std::optional<PatternClassifier> classifier_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Layout-conditioned composite diffusion on procedural pattern images.";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", m.attr("Error"));
  py::register_exception<ValidationError>(m, "ValidationError", m.attr("Error"));
  py::register_exception<ShapeError>(m, "ShapeError", m.attr("Error"));
  py::register_exception<InvalidParameter>(m, "InvalidParameter", m.attr("Error"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init<std::vector<double>>(), py::arg("betas"))
      .def_static("linear", &make_linear_schedule, py::arg("total_steps") = 1000, py::arg("beta_start") = 1e-4,
                  py::arg("beta_end") = 0.02)
      .def_property_readonly("total_steps", &NoiseSchedule::total_steps)
      .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"))
      .def("beta", &NoiseSchedule::beta, py::arg("t"));

  m.def("step_plan", [](const NoiseSchedule& s, int num_steps, double kappa) {
        const StepPlan p = make_step_plan(s, num_steps, kappa);
        return py::make_tuple(p.timesteps, p.scaffold_steps);
      },
      py::arg("schedule"), py::arg("num_steps"), py::arg("kappa"),
      "Returns (timesteps, scaffold step count) for a kappa in percent.");

  m.def("q_sample", [](const Array& x0, int t, const Array& eps, const NoiseSchedule& s) {
        return to_array(q_sample(to_grid(x0), t, to_grid(eps), s));
      },
      py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def("predict_x0", [](const Array& x_t, int t, const Array& eps, const NoiseSchedule& s) {
        return to_array(predict_x0(to_grid(x_t), t, to_grid(eps), s));
      },
      py::arg("x_t"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def("ddim_step", [](const Array& x_t, int t, int t_prev, const Array& eps, const NoiseSchedule& s) {
        RngStream rng(0, RngLane{"python", t, 0});
        return to_array(ddim_step(to_grid(x_t), t, t_prev, to_grid(eps), 0.0, rng, s));
      },
      py::arg("x_t"), py::arg("t"), py::arg("t_prev"), py::arg("eps"), py::arg("schedule"),
      "Deterministic DDIM update from t to t_prev.");

  m.def("analytic_eps", [](const Array& x_t, int t, const std::vector<double>& weights,
                           const std::vector<Array>& means, const std::vector<double>& stds,
                           const NoiseSchedule& s) {
        GaussianMixtureModel gmm{weights, {}, stds};
        for (const auto& mu : means) gmm.means.push_back(to_grid(mu));
        return to_array(analytic_eps(to_grid(x_t), t, gmm, s));
      },
      py::arg("x_t"), py::arg("t"), py::arg("weights"), py::arg("means"), py::arg("stds"), py::arg("schedule"),
      "Exact noise prediction for isotropic Gaussian-mixture data.");

  m.def("segment_masks", [](const Labels& layout) {
        std::vector<py::array_t<std::uint8_t>> out;
        const SegmentMaskSet masks = build_masks(to_layout(layout));
        for (const auto& mk : masks.masks()) out.push_back(to_array(mk));
        return out;
      },
      py::arg("layout"), "One binary mask per segment, ordered by first appearance.");
  m.def("boundary_band", [](const Labels& layout, int radius) {
        return to_array(boundary_band(build_masks(to_layout(layout)), radius));
      },
      py::arg("layout"), py::arg("radius") = 1);
  m.def("read_layout", [](const std::filesystem::path& path) {
        const SegmentLayout l = parse_layout_file(path);
        Labels out({l.height(), l.width()});
        std::copy(l.ids().begin(), l.ids().end(), out.mutable_data());
        return out;
      },
      py::arg("path"));

  m.def("noise_estimate", [](const Array& img) { return noise_estimate(to_grid(img)); }, py::arg("image"));
  m.def("blending_score", [](const Array& img, const Labels& layout, int radius) {
        return blending_score(to_grid(img), build_masks(to_layout(layout)), radius);
      },
      py::arg("image"), py::arg("layout"), py::arg("radius") = 1);
  m.def("spearman", &spearman, py::arg("x"), py::arg("y"));

  py::class_<Session>(m, "Session")
      .def(py::init<std::filesystem::path>(), py::arg("config"))
      .def("generate", &Session::generate, py::arg("seed") = 0, py::arg("kappa") = py::none())
      .def("text_to_image", &Session::text_to_image, py::arg("seed") = 0)
      .def("serial", &Session::serial, py::arg("seed") = 0)
      .def("evaluate", &Session::evaluate, py::arg("image"), py::arg("seed") = 0, py::arg("kappa") = 0.0,
           py::arg("mode") = "composite")
      .def_property_readonly("layout", &Session::layout)
      .def_property_readonly("resolved_config", &Session::resolved_config);
}
