// Acceptance run: one PASS/FAIL line per criterion. Optional arguments pick a
// subset of criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rps/image_io.hpp"
#include "rps/metrics.hpp"
#include "rps/operators.hpp"
#include "rps/pipeline.hpp"
#include "rps/rps.hpp"
#include "rps/transforms.hpp"
#include "rps/verification.hpp"

using namespace rps;
namespace fs = std::filesystem;

namespace {

fs::path data(const std::string& name) { return fs::path(RPS_TEST_DATA) / name; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<RoIWindow> fixture_rois() {
  std::ifstream in(data("scene256_rois.json"));
  const auto j = nlohmann::json::parse(in);
  std::vector<RoIWindow> out;
  for (const auto& r : j)
    out.push_back({r.at("row_offset").get<Index>(), r.at("col_offset").get<Index>(),
                   r.at("side").get<Index>(), 8, r.at("label").get<int>()});
  return out;
}

Vector random_vector(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

/* 1: refinement indicator ordering ----------------------------------------------- */

Outcome criterion1() {
  const Image scene = io::read_pgm(data("cameraman512.pgm"));
  std::ifstream in(data("cameraman_crops.json"));
  const auto crops = nlohmann::json::parse(in);
  const Index side = crops.at("side").get<Index>();
  // flat, moderate, textured
  std::vector<RoIWindow> w;
  int label = 1;
  for (const char* name : {"flat", "moderate", "textured"})
    w.push_back({crops.at(name).at("row").get<Index>(), crops.at(name).at("col").get<Index>(), side, 8,
                 label++});

  const int seeds = 100;
  int ordered[3] = {0, 0, 0};
  int monotone = 0;
  Index ri_rows = 0;
  for (int s = 1; s <= seeds; ++s) {
    SpcConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.ri_fraction = 0.10;
    cfg.solver = default_roi_solver(Ensemble::MacroBinary01);
    cfg.solver.max_iters = 100;
    cfg.solver.continuation_rounds = 1;
    SpcBackend b(scene, scene, cfg);
    double ri[3][3];
    for (int k = 0; k < 3; ++k) {
      b.acquire(w[k], 0);
      b.reconstruct(w[k], 0);
      for (int blk = 1; blk <= 3; ++blk) {
        ri_rows = b.block_cost(w[k], blk).logical;
        b.acquire(w[k], blk);
        ri[k][blk - 1] = b.refinement_indicator(w[k], blk);
        if (blk < 3) b.reconstruct(w[k], blk);
      }
    }
    for (int sc = 0; sc < 3; ++sc) ordered[sc] += ri[2][sc] > ri[1][sc] && ri[1][sc] > ri[0][sc];
    bool m = true;
    for (int k = 0; k < 3; ++k) m = m && ri[k][0] >= ri[k][1] && ri[k][1] >= ri[k][2];
    monotone += m;
  }
  std::ostringstream d;
  d << "rows/scale " << ri_rows << ", ordering 8x8/4x4/2x2 " << ordered[0] << "/" << ordered[1] << "/"
    << ordered[2] << " of " << seeds << ", non-increasing " << monotone;
  const bool pass = ri_rows == 409 && ordered[0] >= 95 && ordered[1] >= 95 && ordered[2] >= 95 &&
                    monotone >= 90;
  return {pass, d.str()};
}

/* 2: budget accounting ------------------------------------------------------------- */

class CostOnlyBackend final : public RefinementBackend {
 public:
  explicit CostOnlyBackend(const SpcBackend& costs) : costs_(costs) {}
  int final_level() const override { return costs_.final_level(); }
  CycleCost block_cost(const RoIWindow& w, int block) const override { return costs_.block_cost(w, block); }
  void acquire(const RoIWindow&, int) override {}
  void reconstruct(const RoIWindow&, int) override {}
  double refinement_indicator(const RoIWindow& w, int block) override {
    return static_cast<double>(w.side) / block;
  }
  std::string level_name(int level) const override { return costs_.level_name(level); }
  Index macro_at(int level) const override { return costs_.macro_at(level); }

 private:
  const SpcBackend& costs_;
};

Outcome criterion2() {
  const std::vector<RoIWindow> rois = {{0, 0, 128, 8, 1}, {128, 0, 64, 8, 2}, {128, 128, 32, 8, 3}};
  const Image flat(256, 256, Vector::Constant(256 * 256, 0.5));
  const Index per_block = 1638 + 409 + 102;
  const Index lowres = 1000;
  const Index coarse = lowres + per_block;

  std::ostringstream d;
  bool pass = true;
  for (Ensemble e : {Ensemble::MacroBinary01, Ensemble::MacroRademacher}) {
    SpcConfig cfg;
    cfg.ensemble = e;
    cfg.ri_fraction = 0.10;
    const SpcBackend spc(flat, flat, cfg);
    CostOnlyBackend backend(spc);
    Ledger ledger(20000);
    ledger.debit("lowres", {lowres, lowres});
    const auto res = run_prioritisation(rois, backend, ledger);
    bool all_final = true;
    for (const auto& s : res.states) all_final = all_final && s.resolved && s.level == 3;
    const Index want_logical = coarse + 3 * per_block;
    const Index want_physical =
        e == Ensemble::MacroRademacher ? coarse + 2 * 3 * per_block : want_logical;
    pass = pass && all_final && ledger.audit() && ledger.spent() == want_logical &&
           ledger.physical_spent() == want_physical;
    d << to_string(e) << " logical " << ledger.spent() << "/" << want_logical << " physical "
      << ledger.physical_spent() << "/" << want_physical << "; ";
  }
  return {pass, d.str()};
}

/* 3: multi-level Walsh map counts ------------------------------------------------- */

Outcome criterion3() {
  const std::vector<std::pair<Index, std::array<Index, 3>>> want = {
      {128, {2025, 689, 562}}, {64, {676, 79, 64}}, {32, {121, 67, 16}}};
  bool pass = true;
  std::ostringstream d;
  for (const auto& [side, counts] : want) {
    const Index budget = static_cast<Index>(std::floor(0.2 * static_cast<double>(side * side)));
    const auto map = design_sampling_map(side, budget, multilevel_fractions(side), 7);
    std::array<Index, 3> got{};
    for (int l = 0; l < 3; ++l)
      got[static_cast<std::size_t>(l)] = static_cast<Index>(map.indices_in(static_cast<WalshLevel>(l)).size());
    pass = pass && got == counts && map.counts == counts;
    d << side << ": (" << got[0] << ", " << got[1] << ", " << got[2] << ") ";
  }
  return {pass, d.str()};
}

/* 4: refinement bound ------------------------------------------------------------------ */

Outcome criterion4() {
  const std::vector<double> alphas = {0.01, 0.1, 1.0};
  const auto sweep = bound_sweep(16, 6, 6, alphas, 100, Matrix(), 2024);
  bool pass = sweep.size() == alphas.size();
  std::ostringstream d;
  for (const auto& row : sweep) {
    pass = pass && row.instances == 100 && row.holds == 100;
    d << "alpha " << row.alpha << ": " << row.holds << "/" << row.instances << "; ";
  }
  Rng rng(99);
  const Matrix A_c = gaussian_matrix(6, 16, rng);
  Vector x = Vector::Zero(16);
  x[3] = 1.5;
  x[11] = -0.7;
  for (double a : alphas) {
    const auto e = check_expected_bound(A_c, x, 6, a, Matrix(), 200, 555);
    pass = pass && e.trials == 200 && e.passes;
    d << "E[alpha " << a << "] " << fmt("%.4g", e.mean_lhs) << " <= " << fmt("%.4g", e.mean_rhs)
      << (e.passes ? "" : " (fails)") << "; ";
  }
  return {pass, d.str()};
}

/* 5: operators and transforms -------------------------------------------------------- */

double adjoint_gap(const LinearOperator& A, std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 3; ++t) {
    const Vector x = random_vector(A.cols(), seed + 2 * t);
    const Vector y = random_vector(A.rows(), seed + 2 * t + 1);
    const Vector Ax = A.apply(x);
    const double scale = Ax.norm() * y.norm();
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(Ax.dot(y) - x.dot(A.apply_adjoint(y))) / scale);
  }
  return worst;
}

class TransformOp final : public LinearOperator {
 public:
  explicit TransformOp(SparsityTransform t) : t_(std::move(t)) {}
  Index rows() const override { return t_.rows() * t_.cols(); }
  Index cols() const override { return t_.rows() * t_.cols(); }
  Vector apply(const Vector& x) const override { return t_.analysis(x); }
  Vector apply_adjoint(const Vector& y) const override { return t_.synthesis(y); }

 private:
  SparsityTransform t_;
};

class GradientOp final : public LinearOperator {
 public:
  GradientOp(Index r, Index c) : r_(r), c_(c) {}
  Index rows() const override { return 2 * r_ * c_; }
  Index cols() const override { return r_ * c_; }
  Vector apply(const Vector& x) const override {
    Vector g;
    tv_gradient(x, r_, c_, g);
    return g;
  }
  Vector apply_adjoint(const Vector& y) const override {
    Vector x;
    tv_gradient_adjoint(y, r_, c_, x);
    return x;
  }

 private:
  Index r_, c_;
};

// Sequency-ordered +-1 Hadamard rows, sorted by sign-change count.
Matrix sequency_hadamard(Index n) {
  Matrix h = Matrix::Ones(1, 1);
  while (h.rows() < n) {
    Matrix next(2 * h.rows(), 2 * h.rows());
    next << h, h, h, -h;
    h = next;
  }
  std::vector<std::pair<int, Index>> order;
  for (Index r = 0; r < n; ++r) {
    int changes = 0;
    for (Index c = 1; c < n; ++c) changes += (h(r, c) > 0) != (h(r, c - 1) > 0);
    order.push_back({changes, r});
  }
  std::sort(order.begin(), order.end());
  Matrix out(n, n);
  for (Index k = 0; k < n; ++k) out.row(k) = h.row(order[static_cast<std::size_t>(k)].second);
  return out;
}

Matrix walsh_rows_oracle(Index side, const std::vector<Index>& indices) {
  const Matrix h = sequency_hadamard(side);
  Matrix m(static_cast<Index>(indices.size()), side * side);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index u = indices[i] / side, v = indices[i] % side;
    for (Index p = 0; p < side; ++p)
      for (Index q = 0; q < side; ++q)
        m(static_cast<Index>(i), p * side + q) = h(u, p) * h(v, q) / static_cast<double>(side);
  }
  return m;
}

Matrix mask_rows_oracle(const MeasurementOperator& op) {
  const MaskEnsemble& e = *op.ensemble();
  const Index g = e.window_side / e.macro_side;
  Matrix m(op.rows(), op.cols());
  for (Index r = 0; r < op.rows(); ++r)
    for (Index p = 0; p < e.window_side; ++p)
      for (Index q = 0; q < e.window_side; ++q)
        m(r, p * e.window_side + q) = op.mask_entry(r, (p / e.macro_side) * g + q / e.macro_side);
  return m * op.column_scale();
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Dense stacking check: [A_C; B] materialises as the two blocks, and the
// refined residual splits into the coarse and refinement residuals.
double stacking_gap(const MeasurementOperator& a_c, const MeasurementOperator& b,
                    const Matrix& a_c_oracle, const Matrix& b_oracle, std::uint64_t seed) {
  const MeasurementOperator a_r = stack(a_c, b);
  Matrix want(a_c_oracle.rows() + b_oracle.rows(), a_c_oracle.cols());
  want << a_c_oracle, b_oracle;
  double gap = max_abs(to_dense(a_r) - want) / std::max(max_abs(want), 1e-300);
  const Vector x = random_vector(a_r.cols(), seed);
  const Vector y_c = random_vector(a_c.rows(), seed + 1);
  const Vector y_b = random_vector(b.rows(), seed + 2);
  Vector y_r(y_c.size() + y_b.size());
  y_r << y_c, y_b;
  const double lhs = (want * x - y_r).squaredNorm();
  const double rhs = (a_c_oracle * x - y_c).squaredNorm() + (b_oracle * x - y_b).squaredNorm();
  gap = std::max(gap, std::abs(lhs - rhs) / lhs);
  const double operator_lhs = (a_r.apply(x) - y_r).squaredNorm();
  return std::max(gap, std::abs(operator_lhs - rhs) / rhs);
}

Outcome criterion5() {
  double adj = 0.0, trip = 0.0, stacking = 0.0;
  std::string worst_adj;
  auto note_adj = [&](const std::string& name, double g) {
    if (g > adj) worst_adj = name;
    adj = std::max(adj, g);
  };

  std::uint64_t seed = 1000;
  for (MaskScheme s : {MaskScheme::Binary01, MaskScheme::Rademacher})
    for (Index macro : {1, 2, 4, 8}) {
      note_adj("mask", adjoint_gap(build_macro_mask_operator(64, macro, s, 137, seed), seed + 1));
      seed += 7;
    }
  const auto map = design_sampling_map(64, 819, multilevel_fractions(64), 5);
  note_adj("walsh", adjoint_gap(build_walsh_operator(map), 11));
  for (int l = 0; l < 3; ++l)
    note_adj("walsh level", adjoint_gap(MeasurementOperator::walsh_level(map, static_cast<WalshLevel>(l)), 12 + l));
  note_adj("walsh indices", adjoint_gap(MeasurementOperator::walsh_indices(32, {0, 5, 17, 400, 1023}), 20));
  const auto bin = build_macro_mask_operator(64, 4, MaskScheme::Binary01, 50, 1);
  const auto rad = build_macro_mask_operator(64, 2, MaskScheme::Rademacher, 70, 2);
  note_adj("stack", adjoint_gap(stack(stack(bin, rad), build_walsh_operator(map)), 21));
  note_adj("grid lift", adjoint_gap(GridLift(std::make_shared<MeasurementOperator>(stack(bin, rad)), 64, 4), 22));
  note_adj("grid lift", adjoint_gap(GridLift(std::make_shared<MeasurementOperator>(bin), 64, 2), 23));
  {
    Rng rng(3);
    note_adj("dense", adjoint_gap(DenseOperator(gaussian_matrix(30, 50, rng)), 24));
  }
  for (TransformKind k : {TransformKind::Identity, TransformKind::Walsh2D, TransformKind::DCT2D,
                          TransformKind::DWT_DB8, TransformKind::DWT_Haar})
    note_adj("transform", adjoint_gap(TransformOp(SparsityTransform({k, 3}, 64, 64)), 30));
  note_adj("dct rect", adjoint_gap(TransformOp(SparsityTransform({TransformKind::DCT2D, 3}, 24, 40)), 31));
  note_adj("tv", adjoint_gap(GradientOp(17, 23), 32));

  auto note_trip = [&](const Image& a, const Image& b) {
    trip = std::max(trip, (a.data() - b.data()).norm() / a.data().norm());
  };
  for (Index side : {16, 64, 128}) {
    Rng rng(side);
    Image img(side, side);
    for (Index r = 0; r < side; ++r)
      for (Index c = 0; c < side; ++c) img(r, c) = rng.uniform();
    note_trip(img, iwalsh2d(walsh2d(img)));
    note_trip(img, idct2d(dct2d(img)));
    for (int levels : {1, 3}) {
      note_trip(img, idwt2d(dwt2d(img, levels, Wavelet::DB8), levels, Wavelet::DB8));
      note_trip(img, idwt2d(dwt2d(img, levels, Wavelet::Haar), levels, Wavelet::Haar));
    }
  }
  {
    Rng rng(77);
    Image rect(24, 40);
    for (Index r = 0; r < 24; ++r)
      for (Index c = 0; c < 40; ++c) rect(r, c) = rng.normal();
    note_trip(rect, idct2d(dct2d(rect)));
  }

  // 16x16 dense cross-checks against independently built matrices.
  const Index side = 16;
  double dense_gap = 0.0;
  for (MaskScheme s : {MaskScheme::Binary01, MaskScheme::Rademacher}) {
    const auto a_c = build_macro_mask_operator(side, 4, s, 25, 40);
    const auto b = build_macro_mask_operator(side, 2, s, 25, 41);
    const Matrix oa = mask_rows_oracle(a_c), ob = mask_rows_oracle(b);
    dense_gap = std::max({dense_gap, max_abs(to_dense(a_c) - oa), max_abs(to_dense(b) - ob)});
    stacking = std::max(stacking, stacking_gap(a_c, b, oa, ob, 42));
  }
  const auto wmap = design_sampling_map(side, 51, multilevel_fractions(side), 9);
  const auto low = MeasurementOperator::walsh_level(wmap, WalshLevel::Low);
  const auto mid = MeasurementOperator::walsh_level(wmap, WalshLevel::Mid);
  const auto high = MeasurementOperator::walsh_level(wmap, WalshLevel::High);
  const Matrix olow = walsh_rows_oracle(side, wmap.indices_in(WalshLevel::Low));
  const Matrix omid = walsh_rows_oracle(side, wmap.indices_in(WalshLevel::Mid));
  const Matrix ohigh = walsh_rows_oracle(side, wmap.indices_in(WalshLevel::High));
  dense_gap = std::max({dense_gap, max_abs(to_dense(low) - olow), max_abs(to_dense(mid) - omid),
                        max_abs(to_dense(high) - ohigh)});
  stacking = std::max(stacking, stacking_gap(low, mid, olow, omid, 43));
  Matrix olm(olow.rows() + omid.rows(), olow.cols());
  olm << olow, omid;
  stacking = std::max(stacking, stacking_gap(stack(low, mid), high, olm, ohigh, 44));
  stacking = std::max(stacking, dense_gap);

  std::ostringstream d;
  d << "adjoint " << fmt("%.2e", adj) << " (worst: " << (worst_adj.empty() ? "-" : worst_adj)
    << "), round trips " << fmt("%.2e", trip) << ", stacking " << fmt("%.2e", stacking);
  return {adj <= 1e-10 && trip <= 1e-10 && stacking <= 1e-10, d.str()};
}

/* 6: per-level quality trend ------------------------------------------------------------ */

Outcome criterion6() {
  const Image scene = io::read_pgm(data("scene256.pgm"));
  const auto rois = fixture_rois();
  const Index budget = static_cast<Index>(std::floor(0.15 * static_cast<double>(scene.size())));
  bool pass = true;
  std::ostringstream d;
  d << "budget " << budget << "; ";
  for (Ensemble e : {Ensemble::MacroBinary01, Ensemble::MacroRademacher, Ensemble::WalshMultilevel}) {
    RpsConfig cfg;
    cfg.ensemble = e;
    cfg.budget = budget;
    cfg.rois = rois;
    const auto t0 = std::chrono::steady_clock::now();
    const RpsResult r = rps_run(scene, cfg);
    const double dt = seconds_since(t0);
    bool ok = dt <= 900.0;
    d << to_string(e) << " final SSIM";
    for (const auto& roi : r.rois) {
      const auto& h = roi.history;
      ok = ok && roi.state.resolved && static_cast<int>(h.size()) == 4;
      for (std::size_t k = 1; k < h.size(); ++k)
        ok = ok && h[k].metrics.nmse < h[k - 1].metrics.nmse && h[k].metrics.ssim > h[k - 1].metrics.ssim;
      if (!h.empty()) {
        ok = ok && h.back().metrics.ssim >= 0.75;
        d << " " << fmt("%.3f", h.back().metrics.ssim);
      }
    }
    d << (ok ? "" : " (fails)") << " in " << fmt("%.0f", dt) << " s; ";
    pass = pass && ok;
  }
  return {pass, d.str()};
}

/* 7: baselines at equal budget ------------------------------------------------------------ */

Outcome criterion7() {
  const Image scene = io::read_pgm(data("scene256.pgm"));
  const auto rois = fixture_rois();
  const Index budget = 5300;
  const auto t0 = std::chrono::steady_clock::now();

  RunConfig cfg;
  cfg.scene_side = scene.rows();
  cfg.rps.ensemble = Ensemble::WalshMultilevel;
  cfg.rps.budget = budget;
  cfg.rps.rois = rois;
  const auto rps = run_pipeline_on(scene, cfg, {});
  const auto classical = run_baseline_on(scene, cfg, BaselineMethod::ClassicalCS, {});
  const auto multilevel = run_baseline_on(scene, cfg, BaselineMethod::MultilevelCS, {});
  const double dt = seconds_since(t0);

  bool pass = dt <= 1800.0 && rps.metrics.rois.size() == rois.size() &&
              classical.metrics.rois.size() == rois.size();
  std::ostringstream d;
  d << "budget " << budget << " (" << fmt("%.1f", 100.0 * budget / static_cast<double>(scene.size()))
    << "%); RoI SSIM rps/classical";
  for (std::size_t i = 0; i < rois.size() && pass; ++i) {
    const double a = rps.metrics.rois[i].metrics.ssim, b = classical.metrics.rois[i].metrics.ssim;
    pass = pass && a - b >= 0.05;
    d << " " << fmt("%.3f", a) << "/" << fmt("%.3f", b);
  }
  const double bg_ml = multilevel.metrics.background_ssim, bg_rps = rps.metrics.background_ssim;
  pass = pass && bg_ml > bg_rps;
  d << "; background multilevel/rps " << fmt("%.3f", bg_ml) << "/" << fmt("%.3f", bg_rps) << "; "
    << fmt("%.0f", dt) << " s";
  return {pass, d.str()};
}

/* 8: determinism --------------------------------------------------------------------------- */

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion8() {
  const fs::path work = fs::temp_directory_path() / "rps_acceptance_determinism";
  fs::remove_all(work);
  fs::create_directories(work);

  RunConfig base;
  base.input = data("scene256.pgm");
  base.scene_side = 256;
  base.rps.ensemble = Ensemble::WalshMultilevel;
  base.rps.budget = 5300;
  base.rps.noise_sigma = 0.01;
  write_json(work / "config.json", base.to_json());

  const auto t0 = std::chrono::steady_clock::now();
  for (const char* run : {"a", "b"}) {
    const RunConfig cfg = RunConfig::load(work / "config.json");
    run_pipeline_on(ingest_scene(cfg.input, cfg.cube, cfg.scene_side), cfg, work / run);
  }
  const double dt = seconds_since(t0);

  int compared = 0, differing = 0;
  for (const char* sub : {"logs", "metrics"}) {
    std::set<std::string> names;
    for (const char* run : {"a", "b"})
      if (fs::exists(work / run / sub))
        for (const auto& f : fs::directory_iterator(work / run / sub)) names.insert(f.path().filename().string());
    for (const auto& n : names) {
      ++compared;
      const fs::path a = work / "a" / sub / n, b = work / "b" / sub / n;
      if (!fs::exists(a) || !fs::exists(b) || slurp(a) != slurp(b)) ++differing;
    }
  }
  std::ostringstream d;
  d << compared << " log/metric files compared, " << differing << " differ; " << fmt("%.0f", dt) << " s";
  return {compared >= 4 && differing == 0 && dt <= 900.0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                          criterion5, criterion6, criterion7, criterion8};
  // Limits in seconds.
  const double limits[] = {120, 1, 1, 300, 60, 2700, 1800, 900};

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
    if (!wanted.empty() && !wanted.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = seconds_since(t0);
    if (dt > limits[n - 1]) {
      o.pass = false;
      o.detail += "; over time limit";
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s  [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), dt);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
