#include <cstdio>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rps/image_io.hpp"
#include "rps/pipeline.hpp"
#include "rps/verification.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kConfig = 2, kBudget = 3, kNumerical = 4 };

// Flags that map one-to-one onto top-level configuration keys.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> input, output_dir, ensemble, rois_path;
  std::optional<long long> budget, lowres_count, lowres_macro, scene_side;
  std::optional<double> ri_fraction, noise_sigma;
  std::optional<std::uint64_t> seed;
  bool normalized_ri = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app->add_option("--input", input, "scene image (.pgm/.raw) or raw cube");
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--ensemble", ensemble, "binary01, rademacher or walsh");
    app->add_option("--budget", budget, "total logical measurement budget");
    app->add_option("--lowres-count", lowres_count, "low-resolution measurements");
    app->add_option("--lowres-macro", lowres_macro, "low-resolution macro pixel side");
    app->add_option("--ri-fraction", ri_fraction, "refinement block fraction of RoI pixels");
    app->add_option("--noise-sigma", noise_sigma, "measurement noise standard deviation");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--scene-side", scene_side, "ingested scene side");
    app->add_option("--rois", rois_path, "JSON file with fixed RoIs (skips detection)")->check(CLI::ExistingFile);
    app->add_flag("--normalized-ri", normalized_ri, "rank RoIs by RI per pending measurement");
  }

  rps::RunConfig resolve() const {
    json j = json::object();
    if (!config_path.empty()) j = read_json(config_path);
    if (!j.is_object()) throw rps::ConfigError("configuration must be a JSON object");
    if (input) j["input"] = *input;
    if (output_dir) j["output_dir"] = *output_dir;
    if (ensemble) j["ensemble"] = *ensemble;
    if (budget) j["budget"] = *budget;
    if (lowres_count) j["lowres_count"] = *lowres_count;
    if (lowres_macro) j["lowres_macro"] = *lowres_macro;
    if (ri_fraction) j["ri_fraction"] = *ri_fraction;
    if (noise_sigma) j["noise_sigma"] = *noise_sigma;
    if (seed) j["seed"] = *seed;
    if (scene_side) j["scene_side"] = *scene_side;
    if (rois_path) j["rois"] = read_json(*rois_path);
    if (normalized_ri) j["normalized_ri"] = true;
    return rps::RunConfig::from_json(j);
  }

  static json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw rps::ConfigError("cannot read " + path);
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw rps::ConfigError(path + " is not valid JSON: " + e.what());
    }
  }
};

struct CubeFlags {
  std::optional<long long> rows, cols, bands;
  std::string type = "f32";

  void attach(CLI::App* app) {
    app->add_option("--cube-rows", rows, "raw cube rows");
    app->add_option("--cube-cols", cols, "raw cube columns");
    app->add_option("--cube-bands", bands, "raw cube bands");
    app->add_option("--cube-type", type, "f32, f64, u8 or u16");
  }

  std::optional<rps::CubeSpec> spec() const {
    if (!rows && !cols && !bands) return std::nullopt;
    if (!rows || !cols) throw rps::ConfigError("--cube-rows and --cube-cols are both required for a cube");
    rps::CubeSpec c;
    c.rows = *rows;
    c.cols = *cols;
    c.bands = bands.value_or(1);
    c.type = rps::sample_type_from_string(type);
    c.validate();
    return c;
  }
};

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

void check_budget(const rps::Ledger& ledger) {
  if (ledger.spent() > ledger.budget() || !ledger.audit()) {
    throw rps::NumericalError("ledger spent " + std::to_string(ledger.spent()) + " exceeds budget " +
                              std::to_string(ledger.budget()));
  }
}

void write_image(const rps::Image& img, const fs::path& path) {
  if (path.extension() == ".raw") {
    rps::io::write_raw(img, path);
  } else {
    rps::io::write_pgm(img, path);
  }
}

std::vector<rps::RoIWindow> read_rois(const std::string& path) {
  try {
    return rps::rois_from_json(ConfigFlags::read_json(path));
  } catch (const json::exception& e) {
    throw rps::ConfigError(path + ": " + e.what());
  }
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const rps::BudgetError& e) {
    std::cerr << "budget infeasible: " << e.what() << '\n';
    return kBudget;
  } catch (const rps::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rps::CapacityError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rps::Error& e) {
    // Config, I/O, dimension and bounds errors all stem from the inputs.
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const json::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::bad_alloc&) {
    std::cerr << "numerical failure: out of memory\n";
    return kNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RoI prioritised sampling for single-pixel compressed imaging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rps 1.0.0");

  std::function<void()> action;

  // run
  ConfigFlags run_flags;
  CubeFlags run_cube;
  auto* run = app.add_subcommand("run", "low-resolution pass, detection and prioritised RoI refinement");
  run_flags.attach(run);
  run_cube.attach(run);
  run->callback([&] {
    action = [&] {
      rps::RunConfig cfg = run_flags.resolve();
      if (auto c = run_cube.spec()) cfg.cube = c;
      const auto out = rps::run_pipeline(cfg);
      check_budget(out.result.ledger);
      json summary = out.metrics.to_json();
      summary["output_dir"] = out.output_dir.string();
      summary["spent"] = out.result.ledger.spent();
      summary["budget"] = out.result.ledger.budget();
      print(summary);
    };
  });

  // baseline
  ConfigFlags base_flags;
  CubeFlags base_cube;
  std::string method = "classical";
  auto* base = app.add_subcommand("baseline", "whole-scene classical or multi-level compressed sensing");
  base_flags.attach(base);
  base_cube.attach(base);
  base->add_option("--method", method, "classical or multilevel");
  base->callback([&] {
    action = [&] {
      rps::RunConfig cfg = base_flags.resolve();
      if (auto c = base_cube.spec()) cfg.cube = c;
      const auto out = rps::run_baseline(cfg, rps::baseline_from_string(method));
      check_budget(out.ledger);
      json summary = out.metrics.to_json();
      summary["method"] = rps::to_string(out.method);
      summary["output_dir"] = out.output_dir.string();
      print(summary);
    };
  });

  // verify-bound
  long long n = 16, rows_c = 6, rows_b = 6;
  int instances = 100, trials = 200;
  std::vector<double> alphas = {0.01, 0.1, 1.0};
  std::uint64_t vb_seed = 1;
  std::string basis = "identity", vb_out;
  auto* vb = app.add_subcommand("verify-bound", "random-instance check of the refinement inequality");
  vb->add_option("--n", n, "signal length");
  vb->add_option("--rows-c", rows_c, "coarse measurement rows");
  vb->add_option("--rows-b", rows_b, "refinement measurement rows");
  vb->add_option("--alphas", alphas, "regularisation weights")->delimiter(',');
  vb->add_option("--instances", instances, "instances per alpha");
  vb->add_option("--trials", trials, "Monte-Carlo draws for the expectation check (0 skips)");
  vb->add_option("--seed", vb_seed, "random seed");
  vb->add_option("--basis", basis, "identity or dct")->check(CLI::IsMember({"identity", "dct"}));
  vb->add_option("--output", vb_out, "CSV file for the sweep");
  vb->callback([&] {
    action = [&] {
      if (n < 1 || rows_c < 1 || rows_b < 1 || instances < 1 || trials < 0 || alphas.empty()) {
        throw rps::ConfigError("verify-bound: sizes and counts must be positive");
      }
      const rps::Matrix W = basis == "dct" ? rps::dct_matrix_dense(n) : rps::Matrix();
      const auto rows = rps::bound_sweep(n, rows_c, rows_b, alphas, instances, W, vb_seed);
      if (!vb_out.empty()) rps::write_sweep_csv(rows, vb_out);
      json report = {{"sweep", json::array()}};
      bool ok = true;
      for (const auto& r : rows) {
        report["sweep"].push_back({{"alpha", r.alpha}, {"instances", r.instances}, {"holds", r.holds},
                                   {"mean_lhs", r.mean_lhs}, {"mean_rhs", r.mean_rhs}});
        ok = ok && r.holds == r.instances;
      }
      if (trials > 0) {
        rps::Rng rng(rps::derive_seed(vb_seed, 0x455850));
        const rps::Matrix A_c = rps::gaussian_matrix(rows_c, n, rng);
        rps::Vector x = rps::Vector::Zero(n);
        for (rps::Index k = 0; k < std::max<rps::Index>(1, n / 8); ++k) x[rng.below(n)] = rng.normal();
        json expected = json::array();
        for (double a : alphas) {
          const auto s = rps::check_expected_bound(A_c, x, rows_b, a, W, trials,
                                                   rps::derive_seed(vb_seed, 0x4D43));
          expected.push_back(s.to_json());
          expected.back()["alpha"] = a;
          ok = ok && s.passes;
        }
        report["expected"] = expected;
      }
      report["holds"] = ok;
      print(report);
      if (!ok) throw rps::NumericalError("refinement bound violated");
    };
  });

  // detect
  std::string det_input, det_out, det_params;
  long long det_macro = 8;
  auto* det = app.add_subcommand("detect", "RoI detection on a low-resolution image");
  det->add_option("--input", det_input, "image (.pgm/.raw)")->required();
  det->add_option("--lowres-macro", det_macro, "macro side the input is reduced to first (1 keeps it)");
  det->add_option("--detection", det_params, "JSON file with detection parameters")->check(CLI::ExistingFile);
  det->add_option("--output", det_out, "JSON file for the detected RoIs");
  det->callback([&] {
    action = [&] {
      rps::Image img = rps::io::read_image(det_input);
      if (det_macro < 1) throw rps::ConfigError("--lowres-macro must be >= 1");
      if (det_macro > 1) img = rps::macro_upsample(rps::macro_downsample(img, det_macro), det_macro);
      rps::DetectionParams p;
      if (!det_params.empty()) p = rps::DetectionParams::from_json(ConfigFlags::read_json(det_params));
      if (det_params.empty()) {
        p.cell = det_macro;
        p.initial_macro = det_macro;
      }
      p.validate();
      const json out = rps::rois_to_json(rps::detect_rois(img, p));
      if (!det_out.empty()) rps::write_json(det_out, out);
      print(out);
    };
  });

  // ingest
  std::string ing_input, ing_out;
  long long ing_side = 256;
  CubeFlags ing_cube;
  auto* ing = app.add_subcommand("ingest", "normalise, band-average and fit a scene");
  ing->add_option("--input", ing_input, "image or raw cube")->required();
  ing->add_option("--output", ing_out, "output image (.pgm or .raw)")->required();
  ing->add_option("--scene-side", ing_side, "output side");
  ing_cube.attach(ing);
  ing->callback([&] {
    action = [&] {
      const rps::Image scene = rps::ingest_scene(ing_input, ing_cube.spec(), ing_side);
      write_image(scene, ing_out);
      print({{"output", ing_out}, {"side", ing_side}, {"min", scene.data().minCoeff()},
             {"max", scene.data().maxCoeff()}, {"mean", scene.data().mean()}});
    };
  });

  // metrics
  std::string met_est, met_ref, met_rois, met_out;
  auto* met = app.add_subcommand("metrics", "NMSE and SSIM of an estimate against a reference");
  met->add_option("--estimate", met_est, "estimate image")->required();
  met->add_option("--reference", met_ref, "reference image")->required();
  met->add_option("--rois", met_rois, "JSON file with RoIs for per-region metrics")->check(CLI::ExistingFile);
  met->add_option("--output", met_out, "JSON file for the report");
  met->callback([&] {
    action = [&] {
      const rps::Image est = rps::io::read_image(met_est);
      const rps::Image ref = rps::io::read_image(met_ref);
      std::vector<rps::RoIWindow> rois;
      if (!met_rois.empty()) rois = read_rois(met_rois);
      const json out = rps::scene_metrics(est, ref, rois).to_json();
      if (!met_out.empty()) rps::write_json(met_out, out);
      print(out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  return run_guarded(action);
}
