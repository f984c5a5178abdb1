#include "rps/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "rps/image_io.hpp"

namespace rps {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBaselineStream = 0x42415345;
constexpr int kBaselineMaxIters = 3000;

std::size_t sample_bytes(SampleType t) {
  switch (t) {
    case SampleType::F32: return 4;
    case SampleType::F64: return 8;
    case SampleType::U8: return 1;
    case SampleType::U16: return 2;
  }
  return 0;
}

// Little-endian decode of one sample.
double decode(const unsigned char* p, SampleType t) {
  auto le = [p](std::size_t n) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
  };
  switch (t) {
    case SampleType::F32: {
      const auto bits = static_cast<std::uint32_t>(le(4));
      return static_cast<double>(std::bit_cast<float>(bits));
    }
    case SampleType::F64: return std::bit_cast<double>(le(8));
    case SampleType::U8: return static_cast<double>(p[0]);
    case SampleType::U16: return static_cast<double>(le(2));
  }
  return 0.0;
}

std::vector<RoIWindow> windows_of(const std::vector<RoIResult>& rois) {
  std::vector<RoIWindow> out;
  for (const auto& r : rois) out.push_back(r.state.window);
  return out;
}

template <class F>
auto as_config_error(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
}

std::string level_file_name(int label, const std::string& level) {
  std::string name = roi_tag(label) + "_" + level;
  std::replace(name.begin(), name.end(), 'x', '_');
  return name;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/* Ingestion --------------------------------------------------------------------- */

std::string to_string(SampleType t) {
  switch (t) {
    case SampleType::F32: return "f32";
    case SampleType::F64: return "f64";
    case SampleType::U8: return "u8";
    case SampleType::U16: return "u16";
  }
  return "?";
}

SampleType sample_type_from_string(const std::string& s) {
  if (s == "f32") return SampleType::F32;
  if (s == "f64") return SampleType::F64;
  if (s == "u8") return SampleType::U8;
  if (s == "u16") return SampleType::U16;
  throw ConfigError("unknown sample type '" + s + "' (expected f32, f64, u8 or u16)");
}

void CubeSpec::validate() const {
  if (rows < 1 || cols < 1 || bands < 1) throw ConfigError("cube rows, cols and bands must be >= 1");
}

nlohmann::json CubeSpec::to_json() const {
  return {{"rows", rows}, {"cols", cols}, {"bands", bands}, {"type", to_string(type)}};
}

CubeSpec CubeSpec::from_json(const nlohmann::json& j) {
  return as_config_error([&] {
    CubeSpec c;
    c.rows = j.at("rows").get<Index>();
    c.cols = j.at("cols").get<Index>();
    c.bands = j.value("bands", Index{1});
    c.type = sample_type_from_string(j.value("type", std::string("f32")));
    c.validate();
    return c;
  });
}

Image normalize_bands(const std::vector<Image>& bands) {
  if (bands.empty()) throw ConfigError("no bands to normalise");
  Vector acc = Vector::Zero(bands[0].size());
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const Image& band = bands[b];
    if (!band.same_shape(bands[0])) throw DimensionError("band " + std::to_string(b) + " has a different shape");
    const double lo = band.data().minCoeff();
    const double hi = band.data().maxCoeff();
    if (!(hi > lo)) {
      throw ConfigError("band " + std::to_string(b) + " is constant (min = max = " + format_real(lo) +
                        "); min-max normalisation is undefined");
    }
    acc += ((band.data().array() - lo) / (hi - lo)).matrix();
  }
  acc /= static_cast<double>(bands.size());
  return Image(bands[0].rows(), bands[0].cols(), acc);
}

Image fit_square(const Image& img, Index side) {
  if (side < 1) throw ConfigError("scene side must be >= 1");
  Image out(side, side);
  // Offsets are negative when padding.
  const Index r0 = (img.rows() - side) / 2;
  const Index c0 = (img.cols() - side) / 2;
  for (Index r = 0; r < side; ++r) {
    const Index sr = std::clamp<Index>(r + r0, 0, img.rows() - 1);
    for (Index c = 0; c < side; ++c) {
      const Index sc = std::clamp<Index>(c + c0, 0, img.cols() - 1);
      out(r, c) = img(sr, sc);
    }
  }
  return out;
}

std::vector<Image> read_cube(const fs::path& path, const CubeSpec& spec) {
  spec.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cube " + path.string());
  const std::size_t bytes = sample_bytes(spec.type);
  const auto plane = static_cast<std::size_t>(spec.rows * spec.cols);
  const std::size_t expected = plane * static_cast<std::size_t>(spec.bands) * bytes;
  std::vector<unsigned char> buf(expected);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected || in.peek() != std::char_traits<char>::eof()) {
    throw IoError("cube " + path.string() + " does not hold " + std::to_string(spec.bands) + " bands of " +
                  std::to_string(spec.rows) + "x" + std::to_string(spec.cols) + " " + to_string(spec.type) +
                  " samples");
  }
  std::vector<Image> bands;
  for (Index b = 0; b < spec.bands; ++b) {
    Vector v(static_cast<Index>(plane));
    const unsigned char* base = buf.data() + static_cast<std::size_t>(b) * plane * bytes;
    for (std::size_t i = 0; i < plane; ++i) v[static_cast<Index>(i)] = decode(base + i * bytes, spec.type);
    if (!v.allFinite()) throw NumericalError("band " + std::to_string(b) + " contains non-finite samples");
    bands.emplace_back(spec.rows, spec.cols, std::move(v));
  }
  return bands;
}

Image ingest_scene(const fs::path& path, const std::optional<CubeSpec>& cube, Index side) {
  std::vector<Image> bands;
  if (cube) {
    bands = read_cube(path, *cube);
  } else {
    bands.push_back(io::read_image(path));
  }
  return fit_square(normalize_bands(bands), side);
}

/* Configuration ------------------------------------------------------------------- */

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::path("rps_output");
}

void RunConfig::validate() const {
  if (scene_side < 8 || !is_power_of_two(scene_side)) throw ConfigError("scene_side must be a power of two >= 8");
  if (cube) cube->validate();
  rps.validate();
  if (scene_side % rps.lowres_macro != 0) throw ConfigError("scene_side must be divisible by lowres_macro");
  if (rps.rois) {
    for (const auto& w : *rps.rois) {
      try {
        w.validate(scene_side, scene_side);
      } catch (const Error& e) {
        throw ConfigError("RoI " + std::to_string(w.label) + ": " + e.what());
      }
    }
  }
  if (baseline_solver) baseline_solver->validate();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = rps.to_json();
  j["input"] = input.string();
  j["output_dir"] = output_dir.string();
  j["scene_side"] = scene_side;
  j["cube"] = cube ? cube->to_json() : nlohmann::json(nullptr);
  j["baseline_solver"] = baseline_solver ? baseline_solver->to_json() : nlohmann::json(nullptr);
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "input",      "output_dir",   "scene_side", "cube",        "baseline_solver", "ensemble",
      "budget",     "lowres_count", "lowres_macro", "ri_fraction", "detection",       "solver",
      "lowres_solver", "seed",      "noise_sigma", "normalized_ri", "rois"};
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
  return as_config_error([&] {
    RunConfig c;
    c.input = j.value("input", std::string());
    c.output_dir = j.value("output_dir", std::string());
    c.scene_side = j.value("scene_side", c.scene_side);
    if (j.contains("cube") && !j.at("cube").is_null()) c.cube = CubeSpec::from_json(j.at("cube"));
    nlohmann::json rest = j;
    for (const char* k : {"input", "output_dir", "scene_side", "cube", "baseline_solver"}) rest.erase(k);
    c.rps = RpsConfig::from_json(rest);
    if (j.contains("baseline_solver") && !j.at("baseline_solver").is_null()) {
      c.baseline_solver = SolverOptions::from_json(j.at("baseline_solver"));
    }
    c.validate();
    return c;
  });
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("configuration " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

fs::path RunConfig::resolved_output(const std::string& command) const {
  if (!output_dir.empty()) return output_dir;
  return default_output_root() / command;
}

/* Artifacts -------------------------------------------------------------------------- */

void OutputLayout::create() const {
  for (const auto& d : {images(), logs(), metrics(), config()}) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create " + d.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json SceneMetrics::to_json() const {
  nlohmann::json rois_j = nlohmann::json::array();
  for (const auto& r : rois) {
    rois_j.push_back({{"label", r.label},
                      {"row_offset", r.window.row_offset},
                      {"col_offset", r.window.col_offset},
                      {"side", r.window.side},
                      {"nmse", r.metrics.nmse},
                      {"ssim", r.metrics.ssim}});
  }
  return {{"scene", scene.to_json()},
          {"rois", rois_j},
          {"background", {{"nmse", background_nmse}, {"ssim", background_ssim}}}};
}

SceneMetrics scene_metrics(const Image& estimate, const Image& truth, const std::vector<RoIWindow>& rois) {
  SceneMetrics m;
  m.scene = evaluate(estimate, truth);
  for (const auto& w : rois) {
    m.rois.push_back({w.label, w, evaluate(extract_window(estimate, w), extract_window(truth, w))});
  }
  m.background_nmse = nmse_outside(estimate, truth, rois);
  m.background_ssim = ssim_outside(estimate, truth, rois);
  return m;
}

/* RPS run ------------------------------------------------------------------------------ */

namespace {

void write_pipeline_artifacts(const PipelineOutcome& o, const RunConfig& config) {
  const OutputLayout out{o.output_dir};
  out.create();
  const RpsResult& r = o.result;

  io::write_pgm(r.scene, out.images() / "scene.pgm");
  io::write_pgm(r.lowres, out.images() / "lowres.pgm");
  io::write_pgm(r.composite, out.images() / "composite.pgm");
  io::write_raw(r.composite, out.images() / "composite.raw");

  std::ostringstream levels;
  levels << "label,level,resolution,nmse,ssim\n";
  nlohmann::json solves = {{"lowres", r.lowres_report.to_json()}, {"rois", nlohmann::json::object()}};
  for (const auto& roi : r.rois) {
    const int label = roi.state.window.label;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& h : roi.history) {
      io::write_pgm(h.patch, out.images() / (level_file_name(label, h.name) + ".pgm"));
      levels << label << ',' << h.level << ',' << h.name << ',' << format_real(h.metrics.nmse) << ','
             << format_real(h.metrics.ssim) << '\n';
      per.push_back({{"level", h.level}, {"resolution", h.name}, {"solve", h.solve}});
    }
    solves["rois"][roi_tag(label)] = per;
    if (roi.map) write_json(out.logs() / (roi_tag(label) + "_walsh_map.json"), roi.map->to_json());
  }

  write_text(out.logs() / "evolution.csv", r.log.to_csv());
  write_json(out.logs() / "evolution.json", r.log.to_json());
  write_json(out.logs() / "ledger.json", r.ledger.to_json());
  write_json(out.logs() / "solves.json", solves);
  write_json(out.logs() / "detected.json", rois_to_json(r.detected));

  write_text(out.metrics() / "levels.csv", levels.str());
  nlohmann::json summary = o.metrics.to_json();
  summary["lowres"] = evaluate(r.lowres, r.scene).to_json();
  nlohmann::json states = nlohmann::json::array();
  for (const auto& roi : r.rois) {
    states.push_back({{"label", roi.state.window.label},
                      {"level", roi.state.level},
                      {"resolved", roi.state.resolved},
                      {"dropped", roi.state.dropped}});
  }
  summary["states"] = states;
  summary["budget"] = {{"budget", r.ledger.budget()},
                       {"spent", r.ledger.spent()},
                       {"physical_spent", r.ledger.physical_spent()},
                       {"remaining", r.ledger.remaining()}};
  write_json(out.metrics() / "summary.json", summary);

  write_json(out.config() / "run.json", config.to_json());
}

}  // namespace

PipelineOutcome run_pipeline_on(const Image& scene, const RunConfig& config, const fs::path& output_dir) {
  config.validate();
  if (scene.rows() != config.scene_side || scene.cols() != config.scene_side) {
    throw DimensionError("scene is " + std::to_string(scene.rows()) + "x" + std::to_string(scene.cols()) +
                         ", configuration expects side " + std::to_string(config.scene_side));
  }
  PipelineOutcome o;
  o.result = rps_run(scene, config.rps);
  if (!o.result.ledger.audit() || o.result.ledger.spent() > config.rps.budget) {
    throw NumericalError("ledger audit failed: spent " + std::to_string(o.result.ledger.spent()) + " of " +
                         std::to_string(config.rps.budget));
  }
  o.metrics = scene_metrics(o.result.composite, scene, windows_of(o.result.rois));
  o.output_dir = output_dir;
  if (!output_dir.empty()) write_pipeline_artifacts(o, config);
  return o;
}

PipelineOutcome run_pipeline(const RunConfig& config) {
  config.validate();
  if (config.input.empty()) throw ConfigError("no input scene configured");
  const Image scene = ingest_scene(config.input, config.cube, config.scene_side);
  return run_pipeline_on(scene, config, config.resolved_output("run"));
}

/* Baselines ------------------------------------------------------------------------------ */

std::string to_string(BaselineMethod m) {
  return m == BaselineMethod::ClassicalCS ? "classical" : "multilevel";
}

BaselineMethod baseline_from_string(const std::string& s) {
  if (s == "classical" || s == "ClassicalCS") return BaselineMethod::ClassicalCS;
  if (s == "multilevel" || s == "MultilevelCS") return BaselineMethod::MultilevelCS;
  throw ConfigError("unknown baseline method '" + s + "' (expected classical or multilevel)");
}

SolverOptions default_baseline_solver(BaselineMethod m) {
  SolverOptions o = default_roi_solver(m == BaselineMethod::ClassicalCS ? Ensemble::MacroRademacher
                                                                         : Ensemble::WalshMultilevel);
  // Whole-scene dense Rademacher products dominate the runtime.
  o.max_iters = kBaselineMaxIters;
  return o;
}

BaselineOutcome run_baseline_on(const Image& scene, const RunConfig& config, BaselineMethod method,
                                const fs::path& output_dir) {
  config.validate();
  if (scene.rows() != scene.cols() || !is_power_of_two(scene.rows())) {
    throw DimensionError("baseline scene must be square with a power-of-two side");
  }
  const Index side = scene.rows();
  const Index n = side * side;
  const Index budget = config.rps.budget;
  if (budget > n) {
    throw ConfigError("baseline budget " + std::to_string(budget) + " exceeds the " + std::to_string(n) +
                      " scene pixels");
  }

  BaselineOutcome o;
  o.method = method;
  o.scene = scene;
  o.ledger = Ledger(budget);
  o.output_dir = output_dir;

  std::optional<WalshSamplingMap> map;
  MeasurementOperator A = MeasurementOperator::empty(n);
  if (method == BaselineMethod::ClassicalCS) {
    A = build_macro_mask_operator(side, 1, MaskScheme::Rademacher, budget,
                                  derive_seed(config.rps.seed, kBaselineStream));
  } else {
    map = design_sampling_map(side, budget, multilevel_fractions(side),
                              derive_seed(config.rps.seed, kBaselineStream + 1));
    A = build_walsh_operator(*map);
  }
  o.ledger.debit(to_string(method), cycle_cost(A), "whole scene at native resolution");

  Vector y = A.apply(scene.data());
  if (config.rps.noise_sigma > 0.0) {
    Rng rng(derive_seed(config.rps.seed, kBaselineStream + 2));
    for (Index i = 0; i < y.size(); ++i) y[i] += config.rps.noise_sigma * rng.normal();
  }
  SolverOptions opts = config.baseline_solver ? *config.baseline_solver : default_baseline_solver(method);
  opts.eta = config.rps.noise_sigma > 0.0
                 ? config.rps.noise_sigma * config.rps.noise_sigma * static_cast<double>(A.rows()) * 1.1
                 : 0.0;
  o.report = solve_analysis_tv(A, SparsityTransform({TransformKind::DWT_DB8, 3}, side, side), y, opts);
  o.reconstruction = Image(side, side, o.report.solution);

  if (config.rps.rois) {
    o.rois = *config.rps.rois;
  } else {
    DetectionParams dp = config.rps.detection;
    dp.cell = config.rps.lowres_macro;
    dp.initial_macro = config.rps.lowres_macro;
    const Image coarse =
        macro_upsample(macro_downsample(o.reconstruction, config.rps.lowres_macro), config.rps.lowres_macro);
    for (const auto& d : detect_rois(coarse, dp)) o.rois.push_back(d.window);
  }
  o.metrics = scene_metrics(o.reconstruction, scene, o.rois);
  if (!o.ledger.audit()) throw NumericalError("ledger audit failed");

  if (!output_dir.empty()) {
    const OutputLayout out{output_dir};
    out.create();
    const std::string tag = to_string(method);
    io::write_pgm(scene, out.images() / "scene.pgm");
    io::write_pgm(o.reconstruction, out.images() / (tag + ".pgm"));
    io::write_raw(o.reconstruction, out.images() / (tag + ".raw"));
    write_json(out.logs() / "ledger.json", o.ledger.to_json());
    write_json(out.logs() / "solve.json", o.report.to_json());
    if (map) write_json(out.logs() / "walsh_map.json", map->to_json());
    nlohmann::json summary = o.metrics.to_json();
    summary["method"] = tag;
    summary["measurements"] = A.rows();
    write_json(out.metrics() / "summary.json", summary);
    nlohmann::json cfg = config.to_json();
    cfg["method"] = tag;
    write_json(out.config() / "run.json", cfg);
  }
  return o;
}

BaselineOutcome run_baseline(const RunConfig& config, BaselineMethod method) {
  config.validate();
  if (config.input.empty()) throw ConfigError("no input scene configured");
  const Image scene = ingest_scene(config.input, config.cube, config.scene_side);
  return run_baseline_on(scene, config, method, config.resolved_output("baseline-" + to_string(method)));
}

}  // namespace rps
