#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "textdestroyer/config.hpp"
#include "textdestroyer/diffusion.hpp"
#include "textdestroyer/errors.hpp"
#include "textdestroyer/fixtures.hpp"
#include "textdestroyer/localization.hpp"
#include "textdestroyer/metrics.hpp"
#include "textdestroyer/pipeline.hpp"

namespace py = pybind11;
namespace td = textdestroyer;

namespace {

using ImageArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

td::Image to_image(const ImageArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw td::ContractViolation("image must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  td::Image img(h, w, c);
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::array_t<std::uint8_t> from_image(const td::Image& img) {
  const td::Image q = td::quantize(img);
  py::array_t<std::uint8_t> out({q.height, q.width, q.channels});
  auto* dst = out.mutable_data();
  for (std::size_t i = 0; i < q.pixels.size(); ++i) dst[i] = static_cast<std::uint8_t>(q.pixels[i]);
  return out;
}

td::Mask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw td::ContractViolation("mask must be (H, W)");
  td::Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (std::size_t i = 0; i < m.size(); ++i) m.storage()[i] = a.data()[i] ? 1 : 0;
  return m;
}

py::array_t<std::uint8_t> from_mask(const td::Mask& m) {
  py::array_t<std::uint8_t> out({m.height(), m.width()});
  std::copy(m.storage().begin(), m.storage().end(), out.mutable_data());
  return out;
}

td::LatentTensor to_latent(const ImageArray& a) {
  if (a.ndim() != 3) throw td::ContractViolation("latent must be (C, H, W)");
  const td::Shape3 shape{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2))};
  return td::LatentTensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> from_latent(const td::LatentTensor& z) {
  py::array_t<double> out({z.shape().channels, z.shape().height, z.shape().width});
  std::copy(z.data().begin(), z.data().end(), out.mutable_data());
  return out;
}

td::PipelineConfig config_from(const std::string& text) {
  td::PipelineConfig c;
  td::apply_config_text(c, text);
  c.validate();
  return c;
}

td::Schedule schedule_for(int steps, const std::string& form) {
  return td::make_subsampled_schedule(steps, td::kDefaultTrainSteps, td::kDefaultBetaRange, td::ddim_form_from_string(form));
}

py::object json_loads(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_textdestroyer, m) {
  m.doc() = "Training-free scene text destruction with a pluggable diffusion backend";

  py::register_exception<td::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<td::ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<td::IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);
  py::register_exception<td::BackendError>(m, "BackendError", PyExc_RuntimeError);
  py::register_exception<td::DegenerateClustering>(m, "DegenerateClustering", PyExc_ValueError);
  py::register_exception<td::IoError>(m, "IoError", PyExc_OSError);

  m.def("default_config", [] { return td::serialize(td::PipelineConfig{}); },
        "Serialized default configuration.");
  m.def("normalize_config", [](const std::string& text) { return td::serialize(config_from(text)); },
        py::arg("text"), "Applies `key = value` lines to the defaults, validates and re-serializes.");

  m.def("alpha_bar", [](int steps) { return td::make_subsampled_schedule(steps).alpha_bar; }, py::arg("steps") = 50,
        "Cumulative alpha products for pipeline steps 0..T.");
  m.def(
      "ddim_denoise_step",
      [](const ImageArray& z, const ImageArray& eps, int t, int steps, const std::string& form) {
        return from_latent(td::ddim_denoise_step(to_latent(z), to_latent(eps), t, schedule_for(steps, form)));
      },
      py::arg("z"), py::arg("eps"), py::arg("t"), py::arg("steps") = 50, py::arg("form") = "as_written");
  m.def(
      "ddim_invert_step",
      [](const ImageArray& z, const ImageArray& eps, int t, int steps, const std::string& form) {
        return from_latent(td::ddim_invert_step(to_latent(z), to_latent(eps), t, schedule_for(steps, form)));
      },
      py::arg("z"), py::arg("eps"), py::arg("t"), py::arg("steps") = 50, py::arg("form") = "as_written");

  m.def(
      "kmeans",
      [](const std::vector<double>& values, int k, std::uint64_t seed) {
        const td::ClusterResult r = td::kmeans(values, k, seed);
        std::vector<double> centers;
        for (const auto& c : r.centers) centers.push_back(c[0]);
        return py::make_tuple(r.assignments, centers);
      },
      py::arg("values"), py::arg("k"), py::arg("seed") = 0,
      "Labels (0 = highest centre) and centres of a 1-D k-means partition.");

  m.def("psnr", [](const ImageArray& a, const ImageArray& b) { return td::psnr(to_image(a), to_image(b)); });
  m.def("mssim", [](const ImageArray& a, const ImageArray& b) { return td::mssim(to_image(a), to_image(b)); });
  m.def("dilate", [](const MaskArray& mask, int k) { return from_mask(td::dilate(to_mask(mask), k)); });

  m.def(
      "glyph_fixture",
      [](std::uint64_t seed, int height, int width) {
        const td::GlyphFixture fx = td::make_glyph_fixture(seed, height, width);
        return py::make_tuple(from_image(fx.image), from_mask(fx.truth));
      },
      py::arg("seed"), py::arg("height") = 96, py::arg("width") = 96,
      "Synthetic glyph image and its ground-truth text mask.");

  m.def(
      "run_image",
      [](const ImageArray& image, const std::string& config_text, std::optional<MaskArray> mask) {
        const td::PipelineConfig config = config_from(config_text);
        std::optional<td::Mask> user_mask;
        if (mask) user_mask = to_mask(*mask);
        const td::Image input = to_image(image);
        td::RunResult r;
        {
          py::gil_scoped_release release;
          auto backend = td::make_backend(config);
          r = td::run_image(config, input, user_mask, *backend);
        }
        py::dict out;
        out["output"] = r.dry_run ? py::none() : py::object(from_image(r.output));
        out["m1"] = from_mask(r.masks.m1);
        out["m2"] = from_mask(r.masks.m2);
        out["m3"] = from_mask(r.masks.m3);
        out["report"] = json_loads(r.report());
        return out;
      },
      py::arg("image"), py::arg("config") = "", py::arg("mask") = py::none(),
      "Runs localization, destruction and restoration on one (H, W, 3) image.");
}
