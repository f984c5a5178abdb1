#include <cmath>
#include <map>

#include "doctest.h"
#include "rps/rps.hpp"
#include "rps/verification.hpp"
#include "test_util.hpp"

using namespace rps;

namespace {

// Replays fixed RI values and block costs; records every call.
class ScriptedBackend final : public RefinementBackend {
 public:
  // ri[label][block - 1], cost[label][block]
  ScriptedBackend(int final_level, std::map<int, std::vector<double>> ri,
                  std::map<int, std::vector<Index>> cost, bool walsh)
      : final_(final_level), ri_(std::move(ri)), cost_(std::move(cost)), walsh_(walsh) {}

  int final_level() const override { return final_; }
  CycleCost block_cost(const RoIWindow& w, int block) const override {
    const Index n = cost_.at(w.label).at(static_cast<std::size_t>(block));
    return {n, walsh_ ? 2 * n : n};
  }
  void acquire(const RoIWindow& w, int block) override {
    CHECK(acquired[w.label] == block);
    acquired[w.label] = block + 1;
  }
  void reconstruct(const RoIWindow& w, int level) override {
    CHECK(level < acquired[w.label]);
    CHECK(level <= final_);
    reconstructed[w.label].push_back(level);
  }
  double refinement_indicator(const RoIWindow& w, int block) override {
    CHECK(block == acquired[w.label] - 1);
    return ri_.at(w.label).at(static_cast<std::size_t>(block - 1));
  }
  std::string level_name(int level) const override {
    if (walsh_) return std::vector<std::string>{"coarse", "low", "mid", "high"}.at(static_cast<std::size_t>(level));
    const Index m = macro_at(level);
    return std::to_string(m) + "x" + std::to_string(m);
  }
  Index macro_at(int level) const override { return walsh_ && level > 0 ? 1 : Index{8} >> level; }

  std::map<int, int> acquired;
  std::map<int, std::vector<int>> reconstructed;

 private:
  int final_;
  std::map<int, std::vector<double>> ri_;
  std::map<int, std::vector<Index>> cost_;
  bool walsh_;
};

constexpr double kDash = -1.0;

struct ExpectedRow {
  std::vector<double> ri;  // kDash for an absent value
  int selected;            // 0 for none
  std::string resolution;
  Index available;
};

void check_log(const EvolutionLog& log, const std::vector<ExpectedRow>& expected) {
  REQUIRE(log.rows.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& got = log.rows[i];
    const auto& want = expected[i];
    INFO("iteration " << i + 1);
    CHECK(got.iteration == static_cast<int>(i + 1));
    REQUIRE(got.ri.size() == want.ri.size());
    for (std::size_t k = 0; k < want.ri.size(); ++k) {
      if (want.ri[k] == kDash) {
        CHECK_FALSE(got.ri[k].has_value());
      } else {
        REQUIRE(got.ri[k].has_value());
        CHECK(*got.ri[k] == want.ri[k]);
      }
    }
    CHECK(got.selected.value_or(0) == want.selected);
    CHECK(got.resolution == want.resolution);
    CHECK(got.available == want.available);
  }
}

std::vector<RoIWindow> three_rois() {
  return {{0, 0, 128, 8, 1}, {128, 0, 64, 8, 2}, {128, 128, 32, 8, 3}};
}

std::vector<Index> macro_costs(Index side, int final_level) {
  const Index n = ri_budget(RoIWindow{0, 0, side, 8, 1}, 10.0);
  return std::vector<Index>(static_cast<std::size_t>(final_level + 1), n);
}

Image blocky_scene(Index side, Index block, std::uint64_t seed) {
  const Image coarse = test::random_image(side / block, side / block, seed);
  return macro_upsample(coarse, block);
}

}  // namespace

TEST_CASE("ledger") {
  Ledger l(100);
  l.debit("lowres", {40, 40});
  l.debit("roi1", {30, 60}, "coarse");
  CHECK(l.spent() == 70);
  CHECK(l.physical_spent() == 100);
  CHECK(l.remaining() == 30);
  CHECK(l.can_afford(30));
  CHECK_FALSE(l.can_afford(31));
  CHECK_THROWS_AS(l.debit("roi2", {31, 31}), BudgetError);
  CHECK(l.spent() == 70);
  l.debit("roi1", {30, 30});
  CHECK(l.remaining() == 0);
  CHECK(l.totals_by_label().at("roi1") == CycleCost{60, 90});
  CHECK(l.audit());
  const Ledger back = Ledger::from_json(l.to_json());
  CHECK(back.spent() == 100);
  CHECK(back.entries().size() == 3);
  CHECK(back.entries()[1].note == "coarse");
  CHECK_THROWS_AS(Ledger(-1), ConfigError);
  CHECK(roi_tag(3) == "roi3");
}

TEST_CASE("RI measurement counts") {
  CHECK(ri_budget(RoIWindow{0, 0, 128, 8, 1}, 10.0) == 1638);
  CHECK(ri_budget(RoIWindow{0, 0, 64, 8, 1}, 10.0) == 409);
  CHECK(ri_budget(RoIWindow{0, 0, 32, 8, 1}, 10.0) == 102);
  CHECK(ri_budget(RoIWindow{0, 0, 128, 8, 1}, 20.0) == 3276);
  CHECK(ri_budget(RoIWindow{0, 0, 32, 8, 1}, 100.0) == 1024);
  CHECK_THROWS_AS(ri_budget(RoIWindow{0, 0, 32, 8, 1}, 0.0), ConfigError);
}

TEST_CASE("compute_ri against an explicit replication") {
  Rng rng(4);
  const Matrix Bm = gaussian_matrix(10, 64, rng);
  const DenseOperator B(Bm);
  const Image xc = test::random_image(2, 2, 5);
  Vector lifted(64);
  for (Index r = 0; r < 8; ++r)
    for (Index c = 0; c < 8; ++c) lifted[r * 8 + c] = xc(r / 4, c / 4);
  const Vector y = test::random_vector(10, 6);
  CHECK(compute_ri(y, B, xc) == doctest::Approx((y - Bm * lifted).squaredNorm()).epsilon(1e-13));
  CHECK(compute_ri(Bm * lifted, B, xc) <= 1e-24);
  CHECK(compute_ri(Vector(0), DenseOperator(Matrix(0, 64)), xc) == 0.0);
  CHECK_THROWS_AS(compute_ri(Vector(3), B, xc), DimensionError);
  CHECK_THROWS_AS(compute_ri(y, B, test::random_image(3, 3, 1)), DimensionError);
}

TEST_CASE("selection rule") {
  std::vector<RoIState> s(3);
  s[0].window = {0, 0, 128, 8, 1};
  s[1].window = {0, 0, 64, 8, 2};
  s[2].window = {0, 0, 32, 8, 3};
  s[0].ri = 349.30;
  s[1].ri = 134.64;
  s[2].ri = 14.82;
  s[0].pending_cost = 1638;
  s[1].pending_cost = 409;
  s[2].pending_cost = 102;
  CHECK(select_next(s) == 1);
  s[0].resolved = true;
  CHECK(select_next(s) == 2);
  s[1].dropped = true;
  CHECK(select_next(s) == 3);
  s[2].ri.reset();
  CHECK_FALSE(select_next(s).has_value());

  // Ties: larger window first, then lower label.
  std::vector<RoIState> t(3);
  t[0].window = {0, 0, 32, 8, 1};
  t[1].window = {0, 0, 64, 8, 2};
  t[2].window = {0, 0, 64, 8, 3};
  for (auto& x : t) x.ri = 5.0;
  CHECK(select_next(t) == 2);

  // Per-measurement normalisation favours the cheap, informative window.
  s[0].resolved = false;
  s[1].dropped = false;
  s[2].ri = 30.0;
  s[0].ri = 300.0;
  s[1].ri.reset();
  CHECK(select_next(s, false) == 1);
  CHECK(select_next(s, true) == 3);
}

TEST_CASE("replay: three regions, 0/1 macro pixels, budget 9600") {
  ScriptedBackend b(3,
                    {{1, {349.30, 56.98, 11.73}}, {2, {134.64, 14.64, 3.36}}, {3, {14.82, 6.57, 0.80}}},
                    {{1, macro_costs(128, 3)}, {2, macro_costs(64, 3)}, {3, macro_costs(32, 3)}}, false);
  Ledger ledger(9600);
  ledger.debit("lowres", {1000, 1000});
  const auto res = run_prioritisation(three_rois(), b, ledger);
  check_log(res.log, {
                         {{349.30, 134.64, 14.82}, 1, "4x4", 4302},
                         {{56.98, 134.64, 14.82}, 2, "4x4", 2664},
                         {{56.98, 14.64, 14.82}, 1, "2x2", 2255},
                         {{11.73, 14.64, 14.82}, 3, "4x4", 617},
                         {{11.73, 14.64, 6.57}, 2, "2x2", 515},
                         {{11.73, 3.36, 6.57}, 1, "1x1", 106},
                         {{kDash, 3.36, 6.57}, 3, "2x2", 106},
                         {{kDash, 3.36, 0.80}, 2, "1x1", 4},
                         {{kDash, kDash, 0.80}, 3, "1x1", 4},
                         {{kDash, kDash, kDash}, 0, "-", 4},
                     });
  for (const auto& s : res.states) {
    CHECK(s.resolved);
    CHECK(s.level == 3);
    CHECK(s.window.current_macro == 1);
    CHECK(b.reconstructed[s.window.label] == std::vector<int>{0, 1, 2, 3});
  }
  CHECK(ledger.spent() == 9596);
  CHECK(ledger.totals_by_label().at("roi1").logical == 4 * 1638);
  CHECK(ledger.audit());
  CHECK(res.log.to_csv().find("10,-,-,-,-,-,4") != std::string::npos);
}

TEST_CASE("replay: four regions with refinements dropped for lack of budget") {
  std::vector<RoIWindow> rois = three_rois();
  rois.push_back({192, 192, 32, 8, 4});
  ScriptedBackend b(3,
                    {{1, {272.21, 41.43, 1.0}},
                     {2, {139.14, 14.04, 3.44}},
                     {3, {8.39, 1.80, 1.0}},
                     {4, {29.55, 4.13, 1.10}}},
                    {{1, macro_costs(128, 3)}, {2, macro_costs(64, 3)}, {3, macro_costs(32, 3)}, {4, macro_costs(32, 3)}},
                    false);
  Ledger ledger(8264);
  ledger.debit("lowres", {1000, 1000});
  const auto res = run_prioritisation(rois, b, ledger);
  check_log(res.log, {
                         {{272.21, 139.14, 8.39, 29.55}, 1, "4x4", 2762},
                         {{41.43, 139.14, 8.39, 29.55}, 2, "4x4", 1124},
                         {{41.43, 14.04, 8.39, 29.55}, 1, "2x2", 715},
                         {{kDash, 14.04, 8.39, 29.55}, 4, "4x4", 715},
                         {{kDash, 14.04, 8.39, 4.13}, 2, "2x2", 613},
                         {{kDash, 3.44, 8.39, 4.13}, 3, "4x4", 204},
                         {{kDash, 3.44, 1.80, 4.13}, 4, "2x2", 102},
                         {{kDash, 3.44, 1.80, 1.10}, 2, "1x1", 0},
                         {{kDash, kDash, 1.80, 1.10}, 3, "2x2", 0},
                         {{kDash, kDash, kDash, 1.10}, 4, "1x1", 0},
                         {{kDash, kDash, kDash, kDash}, 0, "-", 0},
                     });
  CHECK(res.states[0].dropped);
  CHECK(res.states[0].level == 2);
  CHECK(res.states[0].window.current_macro == 2);
  CHECK(res.states[1].resolved);
  CHECK(res.states[2].dropped);
  CHECK(res.states[2].level == 2);
  CHECK(res.states[3].resolved);
  CHECK(ledger.remaining() == 0);
}

TEST_CASE("replay: multi-level Walsh blocks with a free coarse level") {
  ScriptedBackend b(3,
                    {{1, {520.56, 81.84, 22.44}}, {2, {110.12, 18.15, 7.30}}, {3, {24.83, 5.50, 3.54}}},
                    {{1, {0, 2025, 689, 562}}, {2, {0, 676, 79, 64}}, {3, {0, 121, 67, 16}}}, true);
  Ledger ledger(5300);
  ledger.debit("lowres", {1000, 1000});
  const auto res = run_prioritisation(three_rois(), b, ledger);
  check_log(res.log, {
                         {{520.56, 110.12, 24.83}, 1, "low", 1478},
                         {{81.84, 110.12, 24.83}, 2, "low", 789},
                         {{81.84, 18.15, 24.83}, 1, "mid", 710},
                         {{22.44, 18.15, 24.83}, 3, "low", 148},
                         {{22.44, 18.15, 5.50}, 1, "high", 81},
                         {{kDash, 18.15, 5.50}, 2, "mid", 81},
                         {{kDash, 7.30, 5.50}, 2, "high", 17},
                         {{kDash, kDash, 5.50}, 3, "mid", 17},
                         {{kDash, kDash, 3.54}, 3, "high", 1},
                         {{kDash, kDash, kDash}, 0, "-", 1},
                     });
  CHECK(ledger.spent() == 5299);
  CHECK(ledger.physical_spent() == 1000 + 2 * 4299);
}

TEST_CASE("no affordable coarse block leaves an empty log") {
  ScriptedBackend b(3, {{1, {1.0, 1.0, 1.0}}}, {{1, macro_costs(32, 3)}}, false);
  Ledger ledger(1000);
  ledger.debit("lowres", {1000, 1000});
  const auto res = run_prioritisation({{0, 0, 32, 8, 1}}, b, ledger);
  CHECK(res.log.rows.empty());
  CHECK(res.states[0].dropped);
  CHECK(b.acquired.empty());
  CHECK_THROWS_AS(run_prioritisation({{0, 0, 32, 8, 1}, {64, 0, 32, 8, 1}}, b, ledger), ConfigError);
}

TEST_CASE("random scripts respect the selection invariants") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(5));
    std::vector<RoIWindow> rois;
    std::map<int, std::vector<double>> ri;
    std::map<int, std::vector<Index>> cost;
    for (int l = 1; l <= k; ++l) {
      const Index side = Index{32} << rng.below(3);
      rois.push_back({0, 0, side, 8, l});
      ri[l] = {rng.uniform() * 100, rng.uniform() * 100, rng.uniform() * 100};
      cost[l] = macro_costs(side, 3);
    }
    ScriptedBackend b(3, ri, cost, false);
    const Index budget = static_cast<Index>(rng.below(12000));
    Ledger ledger(budget);
    const auto res = run_prioritisation(rois, b, ledger);
    CHECK(ledger.spent() <= budget);

    std::map<int, int> level;
    Index last_available = budget;
    for (std::size_t i = 0; i < res.log.rows.size(); ++i) {
      const auto& row = res.log.rows[i];
      CHECK(row.available <= last_available);
      last_available = row.available;
      if (!row.selected) {
        CHECK(i + 1 == res.log.rows.size());
        continue;
      }
      // The selected value is the largest shown.
      const int sel = *row.selected;
      const double chosen = *row.ri[static_cast<std::size_t>(sel - 1)];
      for (const auto& v : row.ri)
        if (v) CHECK(*v <= chosen);
      CHECK(chosen == ri[sel][static_cast<std::size_t>(level[sel])]);
      ++level[sel];
      CHECK(level[sel] <= 3);
    }
    for (const auto& s : res.states) {
      CHECK(s.level == level[s.window.label]);
      CHECK((s.resolved || s.dropped));
      CHECK(s.resolved == (s.level == 3));
    }
  }
}

TEST_CASE("simulated camera block costs") {
  const Image scene = test::random_image(64, 64, 1);
  const RoIWindow w{0, 0, 32, 8, 1};
  SpcConfig c;
  SpcBackend bin(scene, scene, c);
  CHECK(bin.final_level() == 3);
  CHECK(bin.block_cost(w, 0) == CycleCost{102, 102});
  CHECK(bin.block_cost(w, 3) == CycleCost{102, 102});
  CHECK_THROWS_AS(bin.block_cost(w, 4), BoundsError);
  CHECK(bin.level_name(1) == "4x4");

  c.ensemble = Ensemble::MacroRademacher;
  SpcBackend rad(scene, scene, c);
  CHECK(rad.block_cost(w, 0) == CycleCost{102, 102});
  CHECK(rad.block_cost(w, 1) == CycleCost{102, 204});

  c.ensemble = Ensemble::WalshMultilevel;
  c.ri_fraction = 0.2;
  SpcBackend wal(scene, scene, c);
  CHECK(wal.block_cost(w, 0) == CycleCost{0, 0});
  CHECK(wal.block_cost(w, 1) == CycleCost{121, 242});
  CHECK(wal.block_cost(w, 2) == CycleCost{67, 134});
  CHECK(wal.block_cost(w, 3) == CycleCost{16, 32});
  CHECK(wal.level_name(3) == "high");

  c.ri_fraction = 0.0;
  CHECK_THROWS_AS(SpcBackend(scene, scene, c), ConfigError);
  CHECK_THROWS_AS(SpcBackend(scene, Image(32, 32), SpcConfig{}), DimensionError);
}

TEST_CASE("simulated camera recovers macro-constant windows exactly") {
  // Constant on 4x4 blocks: level 1 has more independent rows than unknowns.
  const Image scene = blocky_scene(64, 4, 3);
  const RoIWindow w{32, 0, 32, 8, 1};
  SpcBackend b(scene, scene, SpcConfig{});
  CHECK_THROWS_AS(b.acquire(w, 1), ConfigError);
  b.acquire(w, 0);
  b.reconstruct(w, 0);
  b.acquire(w, 1);
  const double ri = b.refinement_indicator(w, 1);
  CHECK(ri > 0.0);
  b.reconstruct(w, 1);
  const auto& h = b.history(1);
  REQUIRE(h.size() == 2);
  CHECK(h[0].patch.rows() == 32);
  CHECK(h[1].metrics.nmse <= 1e-18);
  CHECK(h[1].metrics.nmse < h[0].metrics.nmse);
  CHECK(h[1].solve.at("unknowns").get<Index>() == 64);

  // After an exact level-1 solution the next RI sees only finer detail, which is absent.
  b.acquire(w, 2);
  CHECK(b.refinement_indicator(w, 2) <= 1e-20 * ri + 1e-24);
  CHECK(b.current_patch(1).has_value());
  CHECK_FALSE(b.current_patch(9).has_value());

  // A different window under the same label is refused.
  CHECK_THROWS_AS(b.acquire(RoIWindow{0, 0, 32, 8, 1}, 3), ConfigError);
}

TEST_CASE("configuration") {
  RpsConfig c;
  CHECK(c.effective_ri_fraction() == 0.10);
  c.ensemble = Ensemble::WalshMultilevel;
  CHECK(c.effective_ri_fraction() == 0.20);
  c.rois = std::vector<RoIWindow>{{0, 0, 32, 8, 1}};
  c.budget = 4000;
  const RpsConfig back = RpsConfig::from_json(c.to_json());
  CHECK(back.ensemble == Ensemble::WalshMultilevel);
  CHECK(back.budget == 4000);
  REQUIRE(back.rois.has_value());
  CHECK((*back.rois)[0] == RoIWindow{0, 0, 32, 8, 1});
  CHECK(back.effective_solver().beta2 == default_roi_solver(Ensemble::WalshMultilevel).beta2);

  CHECK_THROWS_AS(RpsConfig::from_json({{"ensemble", "gaussian"}}), ConfigError);
  CHECK_THROWS_AS(RpsConfig::from_json({{"budget", 0}}), ConfigError);
  CHECK_THROWS_AS(RpsConfig::from_json({{"ri_fraction", 1.5}}), ConfigError);
  CHECK(ensemble_from_string(to_string(Ensemble::MacroRademacher)) == Ensemble::MacroRademacher);
}

TEST_CASE("whole runs on a small scene") {
  const Image scene = blocky_scene(64, 4, 9);
  RpsConfig c;
  c.lowres_count = 40;
  c.rois = std::vector<RoIWindow>{{0, 32, 32, 8, 1}};

  c.budget = 39;
  CHECK_THROWS_AS(rps_run(scene, c), BudgetError);

  c.budget = 40;
  const RpsResult none = rps_run(scene, c);
  CHECK(none.log.rows.empty());
  CHECK(none.composite.data() == none.lowres.data());
  CHECK(none.ledger.spent() == 40);

  c.budget = 40 + 4 * 102;
  const RpsResult full = rps_run(scene, c);
  CHECK(full.ledger.remaining() == 0);
  REQUIRE(full.log.rows.size() == 4);
  CHECK(full.rois[0].state.resolved);
  CHECK(full.rois[0].history.size() == 4);
  // Constant on 4x4 blocks, so the 4x4 level is exact.
  CHECK(full.rois[0].history[1].metrics.nmse <= 1e-18);
  CHECK(extract_window(full.composite, (*c.rois)[0]).data() == full.rois[0].history.back().patch.data());
  CHECK(nmse(extract_window(full.composite, (*c.rois)[0]), extract_window(scene, (*c.rois)[0])) < 0.05);
}
