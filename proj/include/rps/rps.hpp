#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rps/detection.hpp"
#include "rps/image.hpp"
#include "rps/metrics.hpp"
#include "rps/operators.hpp"
#include "rps/solvers.hpp"

namespace rps {

/* Budget ledger -------------------------------------------------------------- */

struct LedgerEntry {
  std::string label;  // "lowres" or "roi<k>"
  Index logical = 0;
  Index physical = 0;
  std::string note;
};

class Ledger {
 public:
  explicit Ledger(Index budget);

  Index budget() const { return budget_; }
  Index spent() const { return spent_; }
  Index physical_spent() const { return physical_; }
  Index remaining() const { return budget_ - spent_; }
  bool can_afford(Index logical) const { return logical <= remaining(); }

  /// Throws BudgetError if the debit would exceed the budget.
  void debit(const std::string& label, const CycleCost& cost, const std::string& note = {});

  const std::vector<LedgerEntry>& entries() const { return entries_; }

  /// Spent totals by label.
  std::map<std::string, CycleCost> totals_by_label() const;

  /// True when the audit trail sums to the running totals within the budget.
  bool audit() const;

  nlohmann::json to_json() const;
  static Ledger from_json(const nlohmann::json& j);

 private:
  Index budget_;
  Index spent_ = 0;
  Index physical_ = 0;
  std::vector<LedgerEntry> entries_;
};

std::string roi_tag(int label);

/* Refinement indicator --------------------------------------------------------- */

/// floor(percent / 100 * side^2)
Index ri_budget(const RoIWindow& window, double percent);

/// ||y_B - B lift(x_C)||^2 where lift replicates x_C onto B's square grid.
double compute_ri(const Vector& y_B, const LinearOperator& B, const Image& x_C);

/* Prioritisation state and log -------------------------------------------------- */

struct RoIState {
  RoIWindow window;
  int level = 0;               // reconstruction level reached (0 = coarse)
  std::optional<double> ri;    // present iff refinement measurements are pending
  Index pending_cost = 0;      // logical cost of the pending refinement block
  bool resolved = false;       // final level reached
  bool dropped = false;        // removed for lack of measurements
  bool live() const { return !resolved && !dropped; }
};

/// Live RoI with the largest RI (or RI per pending measurement when
/// normalised). Ties go to the larger window, then to the smaller label.
std::optional<int> select_next(const std::vector<RoIState>& states, bool normalized = false);

struct EvolutionRow {
  int iteration = 0;
  std::vector<std::optional<double>> ri;  // aligned with EvolutionLog::labels
  std::optional<int> selected;
  std::string resolution;  // level the selected RoI is refined to
  Index available = 0;     // remaining budget before this iteration's debits
};

struct EvolutionLog {
  std::vector<int> labels;
  std::vector<EvolutionRow> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/* Refinement backends ----------------------------------------------------------- */

/// Supplies measurements, reconstructions and RI values to the prioritisation
/// loop. Block 0 is the coarse acquisition; block k >= 1 refines level k-1 to
/// level k and is what the RI at level k-1 is computed from.
class RefinementBackend {
 public:
  virtual ~RefinementBackend() = default;
  virtual int final_level() const = 0;
  virtual CycleCost block_cost(const RoIWindow& window, int block) const = 0;
  virtual void acquire(const RoIWindow& window, int block) = 0;
  virtual void reconstruct(const RoIWindow& window, int level) = 0;
  virtual double refinement_indicator(const RoIWindow& window, int block) = 0;
  virtual std::string level_name(int level) const = 0;
  /// Macro pixel side of the solution at a level (1 at native resolution).
  virtual Index macro_at(int level) const = 0;
};

struct PrioritisationResult {
  std::vector<RoIState> states;
  EvolutionLog log;
};

/// Coarse acquisition and initial RI for every RoI in label order while
/// affordable, then repeated selection and refinement until no live RoI has a
/// pending refinement.
PrioritisationResult run_prioritisation(const std::vector<RoIWindow>& rois,
                                        RefinementBackend& backend, Ledger& ledger,
                                        bool normalized_ri = false);

/* Simulated single-pixel camera ------------------------------------------------------- */

enum class Ensemble { MacroBinary01, MacroRademacher, WalshMultilevel };

std::string to_string(Ensemble e);
Ensemble ensemble_from_string(const std::string& s);

struct SpcConfig {
  Ensemble ensemble = Ensemble::MacroBinary01;
  double ri_fraction = 0.10;
  Index coarse_macro = 8;
  SolverOptions solver;
  TransformSpec basis{TransformKind::DWT_DB8, 3};
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
};

/// Per-level record kept for every RoI.
struct LevelRecord {
  int level = 0;
  std::string name;
  Image patch;  // full-resolution window
  MetricReport metrics;
  nlohmann::json solve;
};

/// Simulates acquisitions of scene windows and reconstructs them.
/// Macro ensembles: block 0 is 0/1 masks at coarse_macro, block k uses
/// coarse_macro >> k with the configured entry scheme; each block has
/// floor(fraction * side^2) rows and reconstructions live on the macro grid.
/// Walsh: block 0 is free and the coarse solution is the low-resolution
/// scene estimate; blocks 1..3 are the low, mid and high sequency levels of a
/// multi-level map with floor(fraction * side^2) rows in total.
class SpcBackend final : public RefinementBackend {
 public:
  SpcBackend(Image scene, Image lowres, SpcConfig config);

  int final_level() const override;
  CycleCost block_cost(const RoIWindow& window, int block) const override;
  void acquire(const RoIWindow& window, int block) override;
  void reconstruct(const RoIWindow& window, int level) override;
  double refinement_indicator(const RoIWindow& window, int block) override;
  std::string level_name(int level) const override;
  Index macro_at(int level) const override;

  /// Full-resolution estimate of a window at its latest level.
  std::optional<Image> current_patch(int label) const;
  const std::vector<LevelRecord>& history(int label) const;
  std::optional<WalshSamplingMap> sampling_map(int label) const;

  const SpcConfig& config() const { return config_; }

 private:
  struct RoIData {
    RoIWindow window;
    Image truth;
    std::vector<MeasurementOperator> blocks;
    std::vector<Vector> measurements;
    std::optional<WalshSamplingMap> map;
    Vector solution;  // on the solution grid
    Index solution_macro = 1;
    std::vector<LevelRecord> history;
  };

  RoIData& data(const RoIWindow& window);
  WalshSamplingMap design_map(const RoIWindow& window) const;
  Index block_rows(const RoIWindow& window) const;
  MeasurementOperator make_block(RoIData& d, int block);
  bool walsh() const { return config_.ensemble == Ensemble::WalshMultilevel; }

  Image scene_;
  Image lowres_;
  SpcConfig config_;
  std::map<int, RoIData> rois_;
};

/* Whole-run orchestration --------------------------------------------------------------- */

struct RpsConfig {
  Ensemble ensemble = Ensemble::MacroBinary01;
  Index budget = 9600;
  Index lowres_count = 1000;
  Index lowres_macro = 8;
  double ri_fraction = 0.0;  // <= 0 picks 0.10 (macro) or 0.20 (Walsh)
  DetectionParams detection;
  std::optional<SolverOptions> solver;         // Analysis+TV for RoIs
  std::optional<SolverOptions> lowres_solver;  // Analysis BPDN for the low-resolution scene
  std::uint64_t seed = 1;
  double noise_sigma = 0.0;
  bool normalized_ri = false;
  std::optional<std::vector<RoIWindow>> rois;  // bypasses detection when set

  double effective_ri_fraction() const;
  SolverOptions effective_solver() const;
  SolverOptions effective_lowres_solver() const;
  void validate() const;
  nlohmann::json to_json() const;
  static RpsConfig from_json(const nlohmann::json& j);
};

SolverOptions default_roi_solver(Ensemble e);
SolverOptions default_lowres_solver();

struct LowresResult {
  Image image;  // scene-sized, replicated from the macro grid
  SolveReport report;
};

/// Scene-wide 0/1 macro-pixel acquisition and BPDN reconstruction with a DCT
/// basis on the macro grid.
LowresResult acquire_lowres(const Image& scene, Index count, Index macro, const SolverOptions& opts,
                            double noise_sigma, std::uint64_t seed);

struct RoIResult {
  RoIState state;
  std::vector<LevelRecord> history;
  std::optional<WalshSamplingMap> map;
};

struct RpsResult {
  Image scene;
  Image lowres;
  Image composite;
  std::vector<DetectedRoI> detected;
  std::vector<RoIResult> rois;
  EvolutionLog log;
  Ledger ledger{0};
  SolveReport lowres_report;
};

/// Full acquisition: low-resolution pass, detection, per-RoI prioritised
/// refinement, composite. Throws BudgetError when the budget cannot cover the
/// low-resolution pass.
RpsResult rps_run(const Image& scene, const RpsConfig& config);

/// Low-resolution background with every RoI's latest estimate pasted in.
Image compose(const Image& lowres, const std::vector<RoIResult>& rois);

}  // namespace rps
