#include "rps/rps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rps {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Index grid_side_of(Index n) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) throw DimensionError("operator columns do not form a square grid");
  return side;
}

Vector concat(const std::vector<Vector>& parts, std::size_t first, std::size_t last) {
  Index total = 0;
  for (std::size_t i = first; i <= last; ++i) total += parts[i].size();
  Vector out(total);
  Index offset = 0;
  for (std::size_t i = first; i <= last; ++i) {
    out.segment(offset, parts[i].size()) = parts[i];
    offset += parts[i].size();
  }
  return out;
}

Vector add_noise(Vector y, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return y;
  Rng rng(seed);
  for (Index i = 0; i < y.size(); ++i) y[i] += sigma * rng.normal();
  return y;
}

// Full-rank noiseless system: the data alone determine the solution. Returns
// an empty report when the residual does not vanish.
SolveReport least_squares_report(const LinearOperator& A, const Vector& y, const std::optional<Vector>& initial) {
  const Vector x0 = initial ? *initial : Vector(Vector::Zero(A.cols()));
  SolveReport rep;
  const Vector x = x0 + cgls(A, y - A.apply(x0), 2000, 1e-15);
  const double res = (y - A.apply(x)).norm();
  if (!(res <= 1e-9 * std::max(1.0, y.norm()))) return rep;
  rep.solution = x;
  rep.converged = true;
  rep.residual_norm = res;
  return rep;
}

// Tags separating the random streams of a run.
constexpr std::uint64_t kLowresStream = 0x4C4F57;
constexpr std::uint64_t kMaskStream = 0x4D41534B;
constexpr std::uint64_t kNoiseStream = 0x4E4F4953;
constexpr std::uint64_t kMapStream = 0x4D4150;

}  // namespace

/* Ledger ---------------------------------------------------------------------- */

Ledger::Ledger(Index budget) : budget_(budget) {
  if (budget < 0) throw ConfigError("measurement budget must be nonnegative");
}

void Ledger::debit(const std::string& label, const CycleCost& cost, const std::string& note) {
  if (cost.logical < 0 || cost.physical < 0) throw BudgetError("negative debit");
  if (!can_afford(cost.logical)) {
    throw BudgetError("debit of " + std::to_string(cost.logical) + " for " + label +
                      " exceeds the remaining budget of " + std::to_string(remaining()));
  }
  spent_ += cost.logical;
  physical_ += cost.physical;
  entries_.push_back({label, cost.logical, cost.physical, note});
}

std::map<std::string, CycleCost> Ledger::totals_by_label() const {
  std::map<std::string, CycleCost> out;
  for (const auto& e : entries_) out[e.label] += CycleCost{e.logical, e.physical};
  return out;
}

bool Ledger::audit() const {
  Index logical = 0, physical = 0;
  for (const auto& e : entries_) {
    logical += e.logical;
    physical += e.physical;
  }
  return logical == spent_ && physical == physical_ && spent_ <= budget_;
}

nlohmann::json Ledger::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"label", e.label}, {"logical", e.logical}, {"physical", e.physical}, {"note", e.note}});
  }
  return {{"budget", budget_}, {"spent", spent_}, {"physical_spent", physical_},
          {"remaining", remaining()}, {"entries", entries}};
}

Ledger Ledger::from_json(const nlohmann::json& j) {
  Ledger l(j.at("budget").get<Index>());
  for (const auto& e : j.at("entries")) {
    l.debit(e.at("label").get<std::string>(),
            {e.at("logical").get<Index>(), e.at("physical").get<Index>()},
            e.value("note", std::string()));
  }
  return l;
}

std::string roi_tag(int label) { return "roi" + std::to_string(label); }

/* RI ---------------------------------------------------------------------------- */

Index ri_budget(const RoIWindow& window, double percent) {
  if (!(percent > 0.0) || percent > 100.0) throw ConfigError("RI percentage must be in (0, 100]");
  const double n = static_cast<double>(window.num_pixels());
  return static_cast<Index>(std::floor(percent * n / 100.0 + 1e-9));
}

double compute_ri(const Vector& y_B, const LinearOperator& B, const Image& x_C) {
  if (y_B.size() != B.rows()) throw DimensionError("RI: measurement count does not match B");
  if (B.rows() == 0) return 0.0;
  const Index side = grid_side_of(B.cols());
  if (x_C.rows() != x_C.cols() || side % x_C.rows() != 0) {
    throw DimensionError("RI: coarse solution grid does not divide the window");
  }
  const Image lifted = macro_upsample(x_C, side / x_C.rows());
  return (y_B - B.apply(lifted.data())).squaredNorm();
}

/* Selection and logging ------------------------------------------------------------ */

std::optional<int> select_next(const std::vector<RoIState>& states, bool normalized) {
  const RoIState* best = nullptr;
  double best_key = 0.0;
  for (const auto& s : states) {
    if (!s.live() || !s.ri) continue;
    const double key = normalized && s.pending_cost > 0 ? *s.ri / static_cast<double>(s.pending_cost) : *s.ri;
    bool better = best == nullptr || key > best_key;
    if (best != nullptr && key == best_key) {
      better = s.window.side > best->window.side ||
               (s.window.side == best->window.side && s.window.label < best->window.label);
    }
    if (better) {
      best = &s;
      best_key = key;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->window.label;
}

std::string EvolutionLog::to_csv() const {
  std::ostringstream out;
  out << "iteration";
  for (int l : labels) out << ",ri_" << roi_tag(l);
  out << ",selected,resolution,available\n";
  for (const auto& r : rows) {
    out << r.iteration;
    for (const auto& v : r.ri) out << ',' << (v ? format_double(*v) : "-");
    out << ',' << (r.selected ? roi_tag(*r.selected) : "-") << ',' << r.resolution << ','
        << r.available << '\n';
  }
  return out.str();
}

nlohmann::json EvolutionLog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json ri = nlohmann::json::object();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ri[roi_tag(labels[i])] = r.ri[i] ? nlohmann::json(*r.ri[i]) : nlohmann::json(nullptr);
    }
    arr.push_back({{"iteration", r.iteration},
                   {"ri", ri},
                   {"selected", r.selected ? nlohmann::json(*r.selected) : nlohmann::json(nullptr)},
                   {"resolution", r.resolution},
                   {"available", r.available}});
  }
  return {{"labels", labels}, {"rows", arr}};
}

/* Prioritisation loop --------------------------------------------------------------- */

PrioritisationResult run_prioritisation(const std::vector<RoIWindow>& rois,
                                        RefinementBackend& backend, Ledger& ledger,
                                        bool normalized_ri) {
  PrioritisationResult out;
  for (const auto& w : rois) {
    for (const auto& s : out.states)
      if (s.window.label == w.label) throw ConfigError("duplicate RoI label " + std::to_string(w.label));
    RoIState s;
    s.window = w;
    out.states.push_back(s);
  }
  std::sort(out.states.begin(), out.states.end(),
            [](const RoIState& a, const RoIState& b) { return a.window.label < b.window.label; });
  for (const auto& s : out.states) out.log.labels.push_back(s.window.label);

  const int final_level = backend.final_level();

  // Buys block (level + 1) and its RI, or drops the RoI when unaffordable.
  auto request_refinement = [&](RoIState& s) {
    const int block = s.level + 1;
    const CycleCost cost = backend.block_cost(s.window, block);
    if (!ledger.can_afford(cost.logical)) {
      s.dropped = true;
      return;
    }
    ledger.debit(roi_tag(s.window.label), cost, "refinement block " + std::to_string(block));
    backend.acquire(s.window, block);
    s.ri = backend.refinement_indicator(s.window, block);
    s.pending_cost = cost.logical;
  };

  for (auto& s : out.states) {
    const CycleCost cost = backend.block_cost(s.window, 0);
    if (!ledger.can_afford(cost.logical)) {
      s.dropped = true;
      continue;
    }
    ledger.debit(roi_tag(s.window.label), cost, "coarse block");
    backend.acquire(s.window, 0);
    backend.reconstruct(s.window, 0);
    s.window.current_macro = backend.macro_at(0);
    if (final_level == 0) s.resolved = true;
  }
  for (auto& s : out.states)
    if (s.live()) request_refinement(s);

  int iteration = 0;
  while (const auto label = select_next(out.states, normalized_ri)) {
    auto it = std::find_if(out.states.begin(), out.states.end(),
                           [&](const RoIState& s) { return s.window.label == *label; });
    RoIState& s = *it;

    EvolutionRow row;
    row.iteration = ++iteration;
    for (const auto& o : out.states) row.ri.push_back(o.live() ? o.ri : std::nullopt);
    row.selected = *label;
    row.resolution = backend.level_name(s.level + 1);
    row.available = ledger.remaining();
    out.log.rows.push_back(row);

    s.level += 1;
    s.ri.reset();
    s.pending_cost = 0;
    backend.reconstruct(s.window, s.level);
    s.window.current_macro = backend.macro_at(s.level);
    if (s.level >= final_level) {
      s.resolved = true;
    } else {
      request_refinement(s);
    }
  }
  if (iteration > 0) {
    EvolutionRow last;
    last.iteration = iteration + 1;
    last.ri.assign(out.states.size(), std::nullopt);
    last.resolution = "-";
    last.available = ledger.remaining();
    out.log.rows.push_back(last);
  }
  return out;
}

/* Ensembles ------------------------------------------------------------------------- */

std::string to_string(Ensemble e) {
  switch (e) {
    case Ensemble::MacroBinary01:
      return "macro_binary01";
    case Ensemble::MacroRademacher:
      return "macro_rademacher";
    case Ensemble::WalshMultilevel:
      return "walsh_multilevel";
  }
  return "unknown";
}

Ensemble ensemble_from_string(const std::string& s) {
  if (s == "macro_binary01" || s == "binary01") return Ensemble::MacroBinary01;
  if (s == "macro_rademacher" || s == "rademacher") return Ensemble::MacroRademacher;
  if (s == "walsh_multilevel" || s == "walsh") return Ensemble::WalshMultilevel;
  throw ConfigError("unknown ensemble '" + s + "'");
}

/* SpcBackend -------------------------------------------------------------------------- */

SpcBackend::SpcBackend(Image scene, Image lowres, SpcConfig config)
    : scene_(std::move(scene)), lowres_(std::move(lowres)), config_(std::move(config)) {
  if (!scene_.same_shape(lowres_)) throw DimensionError("low-resolution estimate must match the scene");
  if (!is_power_of_two(config_.coarse_macro)) throw ConfigError("coarse macro size must be a power of two");
  if (!(config_.ri_fraction > 0.0) || config_.ri_fraction > 1.0) {
    throw ConfigError("RI fraction must be in (0, 1]");
  }
  config_.solver.validate();
}

int SpcBackend::final_level() const { return walsh() ? 3 : log2_exact(config_.coarse_macro); }

Index SpcBackend::block_rows(const RoIWindow& window) const {
  return ri_budget(window, 100.0 * config_.ri_fraction);
}

WalshSamplingMap SpcBackend::design_map(const RoIWindow& w) const {
  return design_sampling_map(w.side, block_rows(w), multilevel_fractions(w.side),
                             derive_seed(config_.seed, kMapStream + static_cast<std::uint64_t>(w.label)));
}

CycleCost SpcBackend::block_cost(const RoIWindow& w, int block) const {
  if (block < 0 || block > final_level()) throw BoundsError("block index out of range");
  if (walsh()) {
    if (block == 0) return {0, 0};
    const Index n = design_map(w).counts[static_cast<std::size_t>(block - 1)];
    return {n, 2 * n};
  }
  const Index rows = block_rows(w);
  if (block == 0 || config_.ensemble == Ensemble::MacroBinary01) return {rows, rows};
  return {rows, 2 * rows};
}

SpcBackend::RoIData& SpcBackend::data(const RoIWindow& w) {
  auto it = rois_.find(w.label);
  if (it != rois_.end()) {
    if (it->second.window.row_offset != w.row_offset || it->second.window.col_offset != w.col_offset ||
        it->second.window.side != w.side) {
      throw ConfigError("RoI label " + std::to_string(w.label) + " reused for a different window");
    }
    return it->second;
  }
  w.validate(scene_.rows(), scene_.cols());
  if (w.side % config_.coarse_macro != 0) throw DimensionError("RoI side must be divisible by the coarse macro size");
  RoIData d{w, extract_window(scene_, w), {}, {}, std::nullopt, Vector(), 1, {}};
  if (walsh()) d.map = design_map(w);
  return rois_.emplace(w.label, std::move(d)).first->second;
}

MeasurementOperator SpcBackend::make_block(RoIData& d, int block) {
  const Index side = d.window.side;
  if (walsh()) {
    if (block == 0) return MeasurementOperator::empty(side * side);
    return MeasurementOperator::walsh_level(*d.map, static_cast<WalshLevel>(block - 1));
  }
  const Index macro = config_.coarse_macro >> block;
  const MaskScheme scheme = block == 0 || config_.ensemble == Ensemble::MacroBinary01
                                ? MaskScheme::Binary01
                                : MaskScheme::Rademacher;
  const auto seed = derive_seed(config_.seed, kMaskStream + 64 * static_cast<std::uint64_t>(d.window.label) +
                                                  static_cast<std::uint64_t>(block));
  return build_macro_mask_operator(side, macro, scheme, block_rows(d.window), seed);
}

void SpcBackend::acquire(const RoIWindow& w, int block) {
  RoIData& d = data(w);
  if (static_cast<int>(d.blocks.size()) != block) throw ConfigError("refinement blocks must be acquired in order");
  MeasurementOperator op = make_block(d, block);
  const auto seed = derive_seed(config_.seed, kNoiseStream + 64 * static_cast<std::uint64_t>(w.label) +
                                                  static_cast<std::uint64_t>(block));
  d.measurements.push_back(add_noise(op.apply(d.truth.data()), config_.noise_sigma, seed));
  d.blocks.push_back(std::move(op));
}

void SpcBackend::reconstruct(const RoIWindow& w, int level) {
  RoIData& d = data(w);
  if (level < 0 || level > final_level()) throw BoundsError("reconstruction level out of range");
  if (static_cast<int>(d.blocks.size()) <= level) throw ConfigError("measurements for this level were not acquired");
  const Index side = d.window.side;

  LevelRecord rec;
  rec.level = level;
  rec.name = level_name(level);

  if (walsh() && level == 0) {
    // The low-resolution scene estimate stands in for the coarse solution.
    const Image patch = extract_window(lowres_, d.window);
    d.solution = patch.data();
    d.solution_macro = 1;
    rec.solve = {{"source", "lowres"}};
  } else {
    const Index macro = walsh() ? 1 : config_.coarse_macro >> level;
    const std::size_t first = walsh() ? 1 : 0;
    MeasurementOperator A = d.blocks[first];
    for (std::size_t b = first + 1; b <= static_cast<std::size_t>(level); ++b) A = stack(A, d.blocks[b]);
    const Vector y = concat(d.measurements, first, static_cast<std::size_t>(level));
    const auto base = std::make_shared<MeasurementOperator>(A);
    const GridLift lifted(base, side, macro);
    const Index grid = side / macro;

    std::optional<Vector> initial;
    if (d.solution.size() > 0) {
      const Index prev_grid = side / d.solution_macro;
      const Image prev(prev_grid, prev_grid, d.solution);
      initial = prev_grid <= grid ? macro_upsample(prev, grid / prev_grid).data()
                                  : macro_downsample(prev, prev_grid / grid).data();
    }
    // A block at macro m has at most (side/m)^2 independent rows once lifted.
    Index rank_bound = 0;
    if (!walsh()) {
      for (std::size_t b = 0; b <= static_cast<std::size_t>(level); ++b) {
        const Index g = side / (config_.coarse_macro >> b);
        rank_bound += std::min(d.blocks[b].rows(), g * g);
      }
    }
    SolverOptions opts = config_.solver;
    opts.eta = config_.noise_sigma > 0.0
                   ? config_.noise_sigma * config_.noise_sigma * static_cast<double>(A.rows()) * 1.1
                   : 0.0;
    SolveReport rep;
    if (opts.eta == 0.0 && rank_bound >= grid * grid) {
      rep = least_squares_report(lifted, y, initial);
    }
    if (rep.solution.size() == 0) {
      rep = solve_analysis_tv(lifted, SparsityTransform(config_.basis, grid, grid), y, opts, initial);
    }
    d.solution = rep.solution;
    d.solution_macro = macro;
    rec.solve = rep.to_json();
    rec.solve["rows"] = A.rows();
    rec.solve["unknowns"] = grid * grid;
  }
  const Index grid = side / d.solution_macro;
  rec.patch = macro_upsample(Image(grid, grid, d.solution), d.solution_macro);
  rec.metrics = evaluate(rec.patch, d.truth);
  d.history.push_back(std::move(rec));
}

double SpcBackend::refinement_indicator(const RoIWindow& w, int block) {
  RoIData& d = data(w);
  if (static_cast<int>(d.blocks.size()) <= block) throw ConfigError("refinement block not acquired");
  if (d.solution.size() == 0) throw ConfigError("RI requested before a coarse solution exists");
  const Index grid = w.side / d.solution_macro;
  return compute_ri(d.measurements[static_cast<std::size_t>(block)], d.blocks[static_cast<std::size_t>(block)],
                    Image(grid, grid, d.solution));
}

std::string SpcBackend::level_name(int level) const {
  if (walsh()) {
    static const char* names[] = {"coarse", "low", "mid", "high"};
    if (level < 0 || level > 3) throw BoundsError("level out of range");
    return names[level];
  }
  const Index m = macro_at(level);
  return std::to_string(m) + "x" + std::to_string(m);
}

Index SpcBackend::macro_at(int level) const {
  if (level < 0 || level > final_level()) throw BoundsError("level out of range");
  if (walsh()) return level == 0 ? config_.coarse_macro : 1;
  return config_.coarse_macro >> level;
}

std::optional<Image> SpcBackend::current_patch(int label) const {
  auto it = rois_.find(label);
  if (it == rois_.end() || it->second.history.empty()) return std::nullopt;
  return it->second.history.back().patch;
}

const std::vector<LevelRecord>& SpcBackend::history(int label) const {
  static const std::vector<LevelRecord> none;
  auto it = rois_.find(label);
  return it == rois_.end() ? none : it->second.history;
}

std::optional<WalshSamplingMap> SpcBackend::sampling_map(int label) const {
  auto it = rois_.find(label);
  if (it == rois_.end()) return std::nullopt;
  return it->second.map;
}

/* Whole run ----------------------------------------------------------------------------- */

SolverOptions default_roi_solver(Ensemble e) {
  SolverOptions o;
  o.beta1 = 1.0;
  o.beta2 = e == Ensemble::WalshMultilevel ? 0.6 : 0.4;
  return o;
}

SolverOptions default_lowres_solver() { return SolverOptions{}; }

double RpsConfig::effective_ri_fraction() const {
  if (ri_fraction > 0.0) return ri_fraction;
  return ensemble == Ensemble::WalshMultilevel ? 0.20 : 0.10;
}

SolverOptions RpsConfig::effective_solver() const { return solver ? *solver : default_roi_solver(ensemble); }

SolverOptions RpsConfig::effective_lowres_solver() const {
  return lowres_solver ? *lowres_solver : default_lowres_solver();
}

void RpsConfig::validate() const {
  if (budget < 1) throw ConfigError("budget must be >= 1");
  if (lowres_count < 1) throw ConfigError("lowres_count must be >= 1");
  if (!is_power_of_two(lowres_macro)) throw ConfigError("lowres_macro must be a power of two");
  const double f = effective_ri_fraction();
  if (!(f > 0.0) || f > 1.0) throw ConfigError("ri_fraction must be in (0, 1]");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
  detection.validate();
  effective_solver().validate();
  effective_lowres_solver().validate();
}

nlohmann::json RpsConfig::to_json() const {
  nlohmann::json j = {{"ensemble", to_string(ensemble)},
                      {"budget", budget},
                      {"lowres_count", lowres_count},
                      {"lowres_macro", lowres_macro},
                      {"ri_fraction", effective_ri_fraction()},
                      {"detection", detection.to_json()},
                      {"solver", effective_solver().to_json()},
                      {"lowres_solver", effective_lowres_solver().to_json()},
                      {"seed", seed},
                      {"noise_sigma", noise_sigma},
                      {"normalized_ri", normalized_ri}};
  if (rois) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& w : *rois) {
      arr.push_back({{"label", w.label}, {"row_offset", w.row_offset}, {"col_offset", w.col_offset},
                     {"side", w.side}, {"macro", w.current_macro}});
    }
    j["rois"] = arr;
  }
  return j;
}

RpsConfig RpsConfig::from_json(const nlohmann::json& j) {
  RpsConfig c;
  if (j.contains("ensemble")) c.ensemble = ensemble_from_string(j.at("ensemble").get<std::string>());
  c.budget = j.value("budget", c.budget);
  c.lowres_count = j.value("lowres_count", c.lowres_count);
  c.lowres_macro = j.value("lowres_macro", c.lowres_macro);
  c.ri_fraction = j.value("ri_fraction", c.ri_fraction);
  if (j.contains("detection")) c.detection = DetectionParams::from_json(j.at("detection"));
  if (j.contains("solver")) {
    nlohmann::json merged = default_roi_solver(c.ensemble).to_json();
    merged.update(j.at("solver"));
    c.solver = SolverOptions::from_json(merged);
  }
  if (j.contains("lowres_solver")) {
    nlohmann::json merged = default_lowres_solver().to_json();
    merged.update(j.at("lowres_solver"));
    c.lowres_solver = SolverOptions::from_json(merged);
  }
  c.seed = j.value("seed", c.seed);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.normalized_ri = j.value("normalized_ri", c.normalized_ri);
  if (j.contains("rois") && !j.at("rois").is_null()) c.rois = rois_from_json(j.at("rois"));
  c.validate();
  return c;
}

LowresResult acquire_lowres(const Image& scene, Index count, Index macro, const SolverOptions& opts,
                            double noise_sigma, std::uint64_t seed) {
  if (scene.rows() != scene.cols()) throw DimensionError("scene must be square");
  const Index side = scene.rows();
  const auto A = std::make_shared<MeasurementOperator>(build_macro_mask_operator(
      side, macro, MaskScheme::Binary01, count, derive_seed(seed, kLowresStream)));
  const Vector y = add_noise(A->apply(scene.data()), noise_sigma, derive_seed(seed, kLowresStream + 1));
  const GridLift lifted(A, side, macro);
  const Index grid = side / macro;
  SolverOptions o = opts;
  const SolveReport rep =
      solve_analysis_bpdn(lifted, SparsityTransform({TransformKind::DCT2D, 0}, grid, grid), y, o);
  LowresResult out{macro_upsample(Image(grid, grid, rep.solution), macro), rep};
  return out;
}

Image compose(const Image& lowres, const std::vector<RoIResult>& rois) {
  Image out = lowres;
  for (auto it = rois.rbegin(); it != rois.rend(); ++it) {
    if (it->history.empty()) continue;
    out = paste_window(out, it->state.window, it->history.back().patch);
  }
  return out;
}

RpsResult rps_run(const Image& scene, const RpsConfig& config) {
  config.validate();
  if (scene.rows() != scene.cols()) throw DimensionError("scene must be square");
  if (scene.rows() % config.lowres_macro != 0) throw DimensionError("scene side must be divisible by lowres_macro");

  RpsResult res;
  res.scene = scene;
  res.ledger = Ledger(config.budget);
  if (config.budget < config.lowres_count) {
    throw BudgetError("budget " + std::to_string(config.budget) + " cannot cover the " +
                      std::to_string(config.lowres_count) + " low-resolution measurements");
  }

  LowresResult low = acquire_lowres(scene, config.lowres_count, config.lowres_macro,
                                    config.effective_lowres_solver(), config.noise_sigma, config.seed);
  res.ledger.debit("lowres", {config.lowres_count, config.lowres_count},
                   "scene at macro " + std::to_string(config.lowres_macro));
  res.lowres = low.image;
  res.lowres_report = low.report;

  DetectionParams dp = config.detection;
  dp.cell = config.lowres_macro;
  dp.initial_macro = config.lowres_macro;
  if (config.rois) {
    for (const auto& w : *config.rois) res.detected.push_back({w, 0.0});
  } else {
    res.detected = detect_rois(res.lowres, dp);
  }
  std::vector<RoIWindow> windows;
  for (const auto& d : res.detected) {
    RoIWindow w = d.window;
    w.current_macro = config.lowres_macro;
    windows.push_back(w);
  }

  SpcConfig spc;
  spc.ensemble = config.ensemble;
  spc.ri_fraction = config.effective_ri_fraction();
  spc.coarse_macro = config.lowres_macro;
  spc.solver = config.effective_solver();
  spc.noise_sigma = config.noise_sigma;
  spc.seed = config.seed;
  SpcBackend backend(scene, res.lowres, spc);

  PrioritisationResult pr = run_prioritisation(windows, backend, res.ledger, config.normalized_ri);
  res.log = std::move(pr.log);
  for (const auto& s : pr.states) {
    res.rois.push_back({s, backend.history(s.window.label), backend.sampling_map(s.window.label)});
  }
  res.composite = compose(res.lowres, res.rois);
  if (!res.ledger.audit()) throw NumericalError("ledger audit failed");
  return res;
}

}  // namespace rps
