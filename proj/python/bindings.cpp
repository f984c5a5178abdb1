// Thin pybind11 layer. Images cross as 2-D float64 arrays, structured data as
// JSON text (decoded on the Python side).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rps/detection.hpp"
#include "rps/image_io.hpp"
#include "rps/metrics.hpp"
#include "rps/operators.hpp"
#include "rps/pipeline.hpp"
#include "rps/rps.hpp"
#include "rps/transforms.hpp"
#include "rps/verification.hpp"

namespace py = pybind11;
using namespace rps;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  const Index rows = a.shape(0), cols = a.shape(1);
  Vector v(rows * cols);
  std::copy(a.data(), a.data() + rows * cols, v.data());
  return Image(rows, cols, std::move(v));
}

Array to_array(const Image& img) {
  Array out({img.rows(), img.cols()});
  std::copy(img.data().data(), img.data().data() + img.size(), out.mutable_data());
  return out;
}

std::vector<RoIWindow> parse_rois(const std::string& text) {
  return text.empty() ? std::vector<RoIWindow>{} : rois_from_json(nlohmann::json::parse(text));
}

py::dict run_result(const RpsResult& r, const SceneMetrics& m) {
  py::dict out;
  out["lowres"] = to_array(r.lowres);
  out["composite"] = to_array(r.composite);
  out["log_csv"] = r.log.to_csv();
  out["log"] = r.log.to_json().dump();
  out["ledger"] = r.ledger.to_json().dump();
  out["metrics"] = m.to_json().dump();
  py::list rois;
  for (const auto& roi : r.rois) {
    py::dict d;
    d["label"] = roi.state.window.label;
    d["level"] = roi.state.level;
    d["resolved"] = roi.state.resolved;
    d["dropped"] = roi.state.dropped;
    py::list levels;
    for (const auto& h : roi.history) {
      py::dict l;
      l["name"] = h.name;
      l["nmse"] = h.metrics.nmse;
      l["ssim"] = h.metrics.ssim;
      l["patch"] = to_array(h.patch);
      levels.append(l);
    }
    d["levels"] = levels;
    rois.append(d);
  }
  out["rois"] = rois;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<BudgetError>(m, "BudgetError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<BoundsError>(m, "BoundsError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("read_image", [](const std::filesystem::path& p) { return to_array(io::read_image(p)); });
  m.def("write_pgm", [](const Array& a, const std::filesystem::path& p, int bits) {
    io::write_pgm(to_image(a), p, bits);
  }, py::arg("image"), py::arg("path"), py::arg("bit_depth") = 16);
  m.def("ingest_scene", [](const std::filesystem::path& p, Index side) {
    return to_array(ingest_scene(p, std::nullopt, side));
  }, py::arg("path"), py::arg("side") = 256);

  m.def("nmse", [](const Array& e, const Array& r) { return nmse(to_image(e), to_image(r)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); });

  m.def("walsh2d", [](const Array& a) { return to_array(walsh2d(to_image(a))); });
  m.def("iwalsh2d", [](const Array& a) { return to_array(iwalsh2d(to_image(a))); });
  m.def("dct2d", [](const Array& a) { return to_array(dct2d(to_image(a))); });
  m.def("idct2d", [](const Array& a) { return to_array(idct2d(to_image(a))); });
  m.def("dwt2d", [](const Array& a, int levels, bool haar) {
    return to_array(dwt2d(to_image(a), levels, haar ? Wavelet::Haar : Wavelet::DB8));
  }, py::arg("image"), py::arg("levels") = 3, py::arg("haar") = false);
  m.def("idwt2d", [](const Array& a, int levels, bool haar) {
    return to_array(idwt2d(to_image(a), levels, haar ? Wavelet::Haar : Wavelet::DB8));
  }, py::arg("coeffs"), py::arg("levels") = 3, py::arg("haar") = false);

  m.def("design_sampling_map", [](Index side, Index budget, std::uint64_t seed) {
    return design_sampling_map(side, budget, multilevel_fractions(side), seed).to_json().dump();
  }, py::arg("side"), py::arg("budget"), py::arg("seed") = 1);

  m.def("mask_measure", [](const Array& window, Index macro, bool rademacher, Index rows, std::uint64_t seed) {
    const Image img = to_image(window);
    if (img.rows() != img.cols()) throw DimensionError("window must be square");
    const auto op = build_macro_mask_operator(img.rows(), macro,
                                              rademacher ? MaskScheme::Rademacher : MaskScheme::Binary01,
                                              rows, seed);
    const Vector y = op.apply(img.data());
    return std::vector<double>(y.data(), y.data() + y.size());
  }, py::arg("window"), py::arg("macro"), py::arg("rademacher"), py::arg("rows"), py::arg("seed") = 1);

  m.def("detect_rois", [](const Array& lowres, const std::string& params) {
    const DetectionParams p = params.empty() ? DetectionParams{} : DetectionParams::from_json(nlohmann::json::parse(params));
    return rois_to_json(detect_rois(to_image(lowres), p)).dump();
  }, py::arg("lowres"), py::arg("params") = "");

  m.def("rps_run", [](const Array& scene, const std::string& config) {
    const RpsConfig cfg = config.empty() ? RpsConfig{} : RpsConfig::from_json(nlohmann::json::parse(config));
    const Image img = to_image(scene);
    RpsResult r;
    {
      py::gil_scoped_release release;
      r = rps_run(img, cfg);
    }
    std::vector<RoIWindow> windows;
    for (const auto& roi : r.rois) windows.push_back(roi.state.window);
    return run_result(r, scene_metrics(r.composite, img, windows));
  }, py::arg("scene"), py::arg("config") = "");

  m.def("run_pipeline", [](const std::string& config) {
    const RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config));
    PipelineOutcome o;
    {
      py::gil_scoped_release release;
      o = run_pipeline(cfg);
    }
    py::dict out = run_result(o.result, o.metrics);
    out["output_dir"] = o.output_dir.string();
    return out;
  });

  m.def("scene_metrics", [](const Array& estimate, const Array& truth, const std::string& rois) {
    return scene_metrics(to_image(estimate), to_image(truth), parse_rois(rois)).to_json().dump();
  }, py::arg("estimate"), py::arg("truth"), py::arg("rois") = "");

  m.def("bound_sweep", [](Index n, Index rows_c, Index rows_b, const std::vector<double>& alphas,
                          int instances, std::uint64_t seed) {
    py::list out;
    for (const auto& r : bound_sweep(n, rows_c, rows_b, alphas, instances, Matrix(), seed)) {
      py::dict d;
      d["alpha"] = r.alpha;
      d["instances"] = r.instances;
      d["holds"] = r.holds;
      d["mean_lhs"] = r.mean_lhs;
      d["mean_rhs"] = r.mean_rhs;
      out.append(d);
    }
    return out;
  }, py::arg("n") = 16, py::arg("rows_c") = 6, py::arg("rows_b") = 6,
     py::arg("alphas") = std::vector<double>{0.01, 0.1, 1.0}, py::arg("instances") = 100,
     py::arg("seed") = 1);
}
