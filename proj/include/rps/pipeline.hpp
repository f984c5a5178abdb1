#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rps/rps.hpp"

namespace rps {

/* Ingestion ------------------------------------------------------------------ */

enum class SampleType { F32, F64, U8, U16 };

std::string to_string(SampleType t);
SampleType sample_type_from_string(const std::string& s);

/// Layout of a headerless band-sequential little-endian cube.
struct CubeSpec {
  Index rows = 0;
  Index cols = 0;
  Index bands = 1;
  SampleType type = SampleType::F32;

  void validate() const;
  nlohmann::json to_json() const;
  static CubeSpec from_json(const nlohmann::json& j);
};

/// Per-band min-max normalisation followed by the per-pixel mean. A constant
/// band raises ConfigError naming its index.
Image normalize_bands(const std::vector<Image>& bands);

/// Centred crop, or edge-replicating pad, to side x side.
Image fit_square(const Image& img, Index side);

std::vector<Image> read_cube(const std::filesystem::path& path, const CubeSpec& spec);

/// Grayscale (.pgm, .raw) or, when a cube spec is given, a raw cube. The
/// result is min-max normalised and fitted to side x side.
Image ingest_scene(const std::filesystem::path& path, const std::optional<CubeSpec>& cube,
                   Index side = 256);

/* Run configuration ----------------------------------------------------------- */

/// Environment variable naming the directory that receives outputs when no
/// output directory is configured.
inline constexpr const char* kOutputRootEnv = "RPS_OUTPUT_ROOT";

/// $RPS_OUTPUT_ROOT if set and non-empty, otherwise "rps_output".
std::filesystem::path default_output_root();

struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir;  // empty: default_output_root() / <command>
  Index scene_side = 256;
  std::optional<CubeSpec> cube;
  RpsConfig rps;
  std::optional<SolverOptions> baseline_solver;

  void validate() const;
  /// Top-level keys: input, output_dir, scene_side, cube, baseline_solver and
  /// every RpsConfig key.
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  std::filesystem::path resolved_output(const std::string& command) const;
};

/* Artifacts -------------------------------------------------------------------- */

/// images/, logs/, metrics/ and config/ under root.
struct OutputLayout {
  std::filesystem::path root;
  std::filesystem::path images() const { return root / "images"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path metrics() const { return root / "metrics"; }
  std::filesystem::path config() const { return root / "config"; }
  void create() const;
};

void write_text(const std::filesystem::path& path, const std::string& text);
/// JSON with 2-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

struct RegionMetrics {
  int label = 0;
  RoIWindow window;
  MetricReport metrics;
};

/// Scene, per-RoI and background (outside every RoI) metrics.
struct SceneMetrics {
  MetricReport scene;
  std::vector<RegionMetrics> rois;
  double background_nmse = 0.0;
  double background_ssim = 0.0;

  nlohmann::json to_json() const;
};

SceneMetrics scene_metrics(const Image& estimate, const Image& truth, const std::vector<RoIWindow>& rois);

/* Orchestration ------------------------------------------------------------------ */

struct PipelineOutcome {
  RpsResult result;
  SceneMetrics metrics;
  std::filesystem::path output_dir;
};

/// Ingests the input, runs RPS and writes every artifact. The ledger is
/// audited before returning.
PipelineOutcome run_pipeline(const RunConfig& config);

/// Same on an already ingested scene; writes nothing when output_dir is empty.
PipelineOutcome run_pipeline_on(const Image& scene, const RunConfig& config,
                                const std::filesystem::path& output_dir);

enum class BaselineMethod { ClassicalCS, MultilevelCS };

std::string to_string(BaselineMethod m);
BaselineMethod baseline_from_string(const std::string& s);

SolverOptions default_baseline_solver(BaselineMethod m);

struct BaselineOutcome {
  BaselineMethod method = BaselineMethod::ClassicalCS;
  Image scene;
  Image reconstruction;
  std::vector<RoIWindow> rois;
  SceneMetrics metrics;
  SolveReport report;
  Ledger ledger{0};
  std::filesystem::path output_dir;
};

/// Whole-scene acquisition at native resolution spending the full budget:
/// ClassicalCS with Rademacher masks, MultilevelCS with a multi-level Walsh
/// map; Analysis+TV reconstruction. Metrics use the configured RoIs, or the
/// ones detected on the reconstruction's low-resolution version.
BaselineOutcome run_baseline(const RunConfig& config, BaselineMethod method);
BaselineOutcome run_baseline_on(const Image& scene, const RunConfig& config, BaselineMethod method,
                                const std::filesystem::path& output_dir);

/// Round-trip exact text (%.17g) used in every CSV artifact.
std::string format_real(double v);

}  // namespace rps
