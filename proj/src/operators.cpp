#include "rps/operators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "rps/transforms.hpp"

namespace rps {

// Mask bits are generated once from the seed and kept packed, one bit per
// entry, in two byte layouts: byte-column major for the forward product and
// row-group major for the adjoint. Each byte is resolved through a 256-entry
// partial-sum table, so a product costs rows * macros / 8 table lookups.
struct MeasurementOperator::Node {
  Kind kind = Kind::Stacked;
  Index rows = 0;
  Index cols = 0;
  double column_scale = 1.0;

  // MacroMask
  MaskEnsemble ensemble;
  Index grid_side = 0;
  Index num_macro = 0;
  Index num_bytes = 0;   // ceil(num_macro / 8)
  Index num_groups = 0;  // ceil(rows / 8)
  std::vector<std::uint8_t> forward_bytes;  // [byte * rows + row]
  std::vector<std::uint8_t> adjoint_bytes;  // [group * num_macro + macro]

  // WalshSubset
  Index side = 0;
  std::vector<Index> indices;

  // Stacked
  std::vector<MeasurementOperator> children;
};

namespace {

constexpr double kMaxMaskBits = 8.0e9;

void fill_table(const double* values, Index count, std::array<double, 256>& table) {
  double v[8];
  for (Index j = 0; j < 8; ++j) v[j] = j < count ? values[j] : 0.0;
  table[0] = 0.0;
  for (unsigned pat = 1; pat < 256; ++pat) {
    table[pat] = table[pat & (pat - 1)] + v[std::countr_zero(pat)];
  }
}

Vector block_sums(const Vector& x, Index side, Index macro) {
  if (macro == 1) return x;
  const Index g = side / macro;
  Vector b = Vector::Zero(g * g);
  for (Index r = 0; r < side; ++r) {
    const Index brow = (r / macro) * g;
    const double* row = x.data() + r * side;
    for (Index c = 0; c < side; ++c) b[brow + c / macro] += row[c];
  }
  return b;
}

Vector replicate(const Vector& z, Index side, Index macro) {
  if (macro == 1) return z;
  const Index g = side / macro;
  Vector x(side * side);
  for (Index r = 0; r < side; ++r) {
    const Index brow = (r / macro) * g;
    double* row = x.data() + r * side;
    for (Index c = 0; c < side; ++c) row[c] = z[brow + c / macro];
  }
  return x;
}

Vector mask_forward(const MeasurementOperator::Node& n, const Vector& x) {
  const Vector b = block_sums(x, n.ensemble.window_side, n.ensemble.macro_side);
  Vector acc = Vector::Zero(n.rows);
  std::array<double, 256> table{};
  for (Index p = 0; p < n.num_bytes; ++p) {
    fill_table(b.data() + 8 * p, std::min<Index>(8, n.num_macro - 8 * p), table);
    const std::uint8_t* bytes = n.forward_bytes.data() + p * n.rows;
    for (Index r = 0; r < n.rows; ++r) acc[r] += table[bytes[r]];
  }
  if (n.ensemble.scheme == MaskScheme::Rademacher) {
    const double total = b.sum();
    acc = 2.0 * acc.array() - total;
  }
  return n.column_scale * acc;
}

Vector mask_adjoint(const MeasurementOperator::Node& n, const Vector& y) {
  Vector z = Vector::Zero(n.num_macro);
  std::array<double, 256> table{};
  for (Index g = 0; g < n.num_groups; ++g) {
    fill_table(y.data() + 8 * g, std::min<Index>(8, n.rows - 8 * g), table);
    const std::uint8_t* bytes = n.adjoint_bytes.data() + g * n.num_macro;
    for (Index k = 0; k < n.num_macro; ++k) z[k] += table[bytes[k]];
  }
  if (n.ensemble.scheme == MaskScheme::Rademacher) {
    const double total = y.sum();
    z = 2.0 * z.array() - total;
  }
  z *= n.column_scale;
  return replicate(z, n.ensemble.window_side, n.ensemble.macro_side);
}

Vector walsh_forward(const MeasurementOperator::Node& n, const Vector& x) {
  const Image coeffs = walsh2d(Image(n.side, n.side, x));
  Vector y(static_cast<Index>(n.indices.size()));
  for (std::size_t i = 0; i < n.indices.size(); ++i) y[static_cast<Index>(i)] = coeffs.data()[n.indices[i]];
  return y;
}

Vector walsh_adjoint(const MeasurementOperator::Node& n, const Vector& y) {
  Vector full = Vector::Zero(n.side * n.side);
  for (std::size_t i = 0; i < n.indices.size(); ++i) full[n.indices[i]] = y[static_cast<Index>(i)];
  return iwalsh2d(Image(n.side, n.side, std::move(full))).data();
}

void require_square_len(const Vector& x, Index expected, const char* what) {
  if (x.size() != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(x.size()));
  }
}

}  // namespace

/* WalshSamplingMap ---------------------------------------------------------- */

WalshLevel WalshSamplingMap::level_of(Index u, Index v) const {
  const Index m = std::max(u, v);
  if (m < s_low) return WalshLevel::Low;
  if (m < s_mid) return WalshLevel::Mid;
  return WalshLevel::High;
}

std::vector<Index> WalshSamplingMap::indices_in(WalshLevel level) const {
  std::vector<Index> out;
  for (Index idx : selected)
    if (level_of(idx / window_side, idx % window_side) == level) out.push_back(idx);
  return out;
}

nlohmann::json WalshSamplingMap::to_json() const {
  return nlohmann::json{{"side", window_side},
                        {"s_low", s_low},
                        {"s_mid", s_mid},
                        {"counts", {counts[0], counts[1], counts[2]}},
                        {"indices", selected},
                        {"seed", seed}};
}

WalshSamplingMap WalshSamplingMap::from_json(const nlohmann::json& j) {
  WalshSamplingMap m;
  m.window_side = j.at("side").get<Index>();
  m.s_low = j.at("s_low").get<Index>();
  m.s_mid = j.at("s_mid").get<Index>();
  const auto c = j.at("counts").get<std::vector<Index>>();
  if (c.size() != 3) throw ConfigError("sampling map needs three level counts");
  m.counts = {c[0], c[1], c[2]};
  m.selected = j.at("indices").get<std::vector<Index>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  if (static_cast<Index>(m.selected.size()) != m.total() ||
      !std::is_sorted(m.selected.begin(), m.selected.end())) {
    throw ConfigError("sampling map index list inconsistent with its counts");
  }
  return m;
}

std::array<double, 3> multilevel_fractions(Index window_side) {
  auto ratio = [](double a, double b, double c) {
    const double t = a + b + c;
    return std::array<double, 3>{a / t, b / t, c / t};
  };
  switch (window_side) {
    case 32:
      return ratio(121, 67, 16);
    case 64:
      return ratio(676, 79, 64);
    default:
      return ratio(2025, 689, 562);
  }
}

WalshSamplingMap design_sampling_map(Index side, Index budget, std::array<double, 3> fractions,
                                     std::uint64_t seed) {
  if (!is_power_of_two(side)) throw DimensionError("sampling map side must be a power of two");
  if (budget < 1) throw ConfigError("sampling budget must be >= 1");
  if (budget > side * side) throw ConfigError("sampling budget exceeds the number of coefficients");
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (fractions[0] <= 0.0 || fractions[1] < 0.0 || fractions[2] < 0.0 || std::abs(fsum - 1.0) > 1e-9) {
    throw ConfigError("level fractions must be positive and sum to one");
  }

  WalshSamplingMap map;
  map.window_side = side;
  map.seed = seed;

  // Largest square inside the low-level share; the slack guards products like
  // (2025/3276) * 3276 that land a few ulps below an exact square.
  const double low_target = fractions[0] * static_cast<double>(budget) * (1.0 + 1e-12);
  Index s_low = static_cast<Index>(std::floor(std::sqrt(low_target)));
  s_low = std::clamp<Index>(s_low, 1, side);
  while (s_low * s_low > budget) --s_low;
  map.s_low = s_low;

  const Index rest = budget - s_low * s_low;
  const double upper = fractions[1] + fractions[2];
  Index n_mid = upper > 0.0 ? static_cast<Index>(std::llround(rest * fractions[1] / upper)) : 0;
  n_mid = std::clamp<Index>(n_mid, 0, rest);
  Index n_high = rest - n_mid;

  // Mid/high boundary: prefer side/2, move it until both regions fit.
  Index s_mid = side;
  if (s_low < side) {
    const Index preferred = std::clamp<Index>(side / 2, s_low + 1, side);
    Index best = -1;
    for (Index s = s_low + 1; s <= side; ++s) {
      const Index cap_mid = s * s - s_low * s_low;
      const Index cap_high = side * side - s * s;
      if (cap_mid >= n_mid && cap_high >= n_high) {
        if (best < 0 || std::abs(s - preferred) < std::abs(best - preferred)) best = s;
      }
    }
    if (best < 0) {
      // No square boundary fits both; keep the preferred one and shift the
      // overflow into the other level. The two capacities sum to rest.
      best = preferred;
      const Index cap_mid = best * best - s_low * s_low;
      const Index cap_high = side * side - best * best;
      if (n_high > cap_high) {
        n_mid += n_high - cap_high;
        n_high = cap_high;
      } else if (n_mid > cap_mid) {
        n_high += n_mid - cap_mid;
        n_mid = cap_mid;
      }
    }
    s_mid = best;
  } else {
    n_mid = 0;
    n_high = 0;
  }
  map.s_mid = s_mid;
  map.counts = {s_low * s_low, n_mid, n_high};

  std::vector<Index> mid_cells;
  std::vector<Index> high_cells;
  for (Index u = 0; u < side; ++u) {
    for (Index v = 0; v < side; ++v) {
      const Index idx = u * side + v;
      switch (map.level_of(u, v)) {
        case WalshLevel::Low:
          map.selected.push_back(idx);
          break;
        case WalshLevel::Mid:
          mid_cells.push_back(idx);
          break;
        case WalshLevel::High:
          high_cells.push_back(idx);
          break;
      }
    }
  }
  auto draw = [&](std::vector<Index>& cells, Index count, std::uint64_t tag) {
    Rng rng(derive_seed(seed, tag));
    for (Index i = 0; i < count; ++i) {
      const auto remaining = static_cast<std::uint64_t>(cells.size()) - static_cast<std::uint64_t>(i);
      const Index j = i + static_cast<Index>(rng.below(remaining));
      std::swap(cells[i], cells[j]);
      map.selected.push_back(cells[i]);
    }
  };
  draw(mid_cells, n_mid, 1);
  draw(high_cells, n_high, 2);
  std::sort(map.selected.begin(), map.selected.end());
  return map;
}

/* MeasurementOperator ------------------------------------------------------- */

MeasurementOperator MeasurementOperator::macro_mask(const MaskEnsemble& e) {
  if (e.window_side < 1 || e.macro_side < 1 || e.window_side % e.macro_side != 0) {
    throw DimensionError("macro side " + std::to_string(e.macro_side) +
                         " does not divide window side " + std::to_string(e.window_side));
  }
  if (e.num_masks < 1) throw ConfigError("number of masks must be >= 1");
  auto n = std::make_shared<Node>();
  n->kind = Kind::MacroMask;
  n->ensemble = e;
  n->rows = e.num_masks;
  n->cols = e.window_side * e.window_side;
  n->grid_side = e.window_side / e.macro_side;
  n->num_macro = n->grid_side * n->grid_side;
  if (2.0 * static_cast<double>(n->rows) * static_cast<double>(n->num_macro) > kMaxMaskBits) {
    throw CapacityError("mask ensemble of " + std::to_string(n->rows) + " x " +
                        std::to_string(n->num_macro) + " entries exceeds the memory bound");
  }
  n->num_bytes = (n->num_macro + 7) / 8;
  n->num_groups = (n->rows + 7) / 8;
  const double second_moment = e.scheme == MaskScheme::Binary01 ? 0.5 : 1.0;
  n->column_scale = 1.0 / std::sqrt(second_moment * static_cast<double>(n->rows));

  n->forward_bytes.assign(static_cast<std::size_t>(n->num_bytes * n->rows), 0);
  n->adjoint_bytes.assign(static_cast<std::size_t>(n->num_groups * n->num_macro), 0);
  const Index words = (n->num_macro + 63) / 64;
  for (Index r = 0; r < n->rows; ++r) {
    Rng rng(derive_seed(e.seed, static_cast<std::uint64_t>(r)));
    for (Index w = 0; w < words; ++w) {
      const std::uint64_t bits = rng.next();
      for (Index b = 0; b < 64; ++b) {
        const Index k = 64 * w + b;
        if (k >= n->num_macro) break;
        if ((bits >> b) & 1ULL) {
          n->forward_bytes[static_cast<std::size_t>((k / 8) * n->rows + r)] |=
              static_cast<std::uint8_t>(1u << (k % 8));
          n->adjoint_bytes[static_cast<std::size_t>((r / 8) * n->num_macro + k)] |=
              static_cast<std::uint8_t>(1u << (r % 8));
        }
      }
    }
  }
  return MeasurementOperator(std::move(n));
}

MeasurementOperator MeasurementOperator::walsh_indices(Index side, std::vector<Index> indices) {
  if (!is_power_of_two(side)) throw DimensionError("Walsh operator side must be a power of two");
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw ConfigError("Walsh index list contains duplicates");
  }
  for (Index idx : indices)
    if (idx < 0 || idx >= side * side) throw BoundsError("Walsh index outside the sequency grid");
  auto n = std::make_shared<Node>();
  n->kind = Kind::WalshSubset;
  n->side = side;
  n->rows = static_cast<Index>(indices.size());
  n->cols = side * side;
  n->column_scale = 1.0 / static_cast<double>(side);
  n->indices = std::move(indices);
  return MeasurementOperator(std::move(n));
}

MeasurementOperator MeasurementOperator::walsh(const WalshSamplingMap& map) {
  return walsh_indices(map.window_side, map.selected);
}

MeasurementOperator MeasurementOperator::walsh_level(const WalshSamplingMap& map, WalshLevel level) {
  return walsh_indices(map.window_side, map.indices_in(level));
}

MeasurementOperator MeasurementOperator::empty(Index cols) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Stacked;
  n->rows = 0;
  n->cols = cols;
  return MeasurementOperator(std::move(n));
}

MeasurementOperator::Kind MeasurementOperator::kind() const { return node_->kind; }
Index MeasurementOperator::rows() const { return node_->rows; }
Index MeasurementOperator::cols() const { return node_->cols; }
double MeasurementOperator::column_scale() const { return node_->column_scale; }

const MaskEnsemble* MeasurementOperator::ensemble() const {
  return node_->kind == Kind::MacroMask ? &node_->ensemble : nullptr;
}

int MeasurementOperator::mask_entry(Index r, Index k) const {
  if (node_->kind != Kind::MacroMask) throw ConfigError("mask_entry on a non-mask operator");
  if (r < 0 || r >= node_->rows || k < 0 || k >= node_->num_macro) throw BoundsError("mask entry out of range");
  const int bit = (node_->forward_bytes[static_cast<std::size_t>((k / 8) * node_->rows + r)] >> (k % 8)) & 1;
  return node_->ensemble.scheme == MaskScheme::Binary01 ? bit : 2 * bit - 1;
}

CycleCost MeasurementOperator::cycle_cost() const {
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::MacroMask:
      return {n.rows, n.ensemble.scheme == MaskScheme::Binary01 ? n.rows : 2 * n.rows};
    case Kind::WalshSubset:
      return {n.rows, 2 * n.rows};
    case Kind::Stacked: {
      CycleCost total;
      for (const auto& c : n.children) total += c.cycle_cost();
      return total;
    }
  }
  return {};
}

Vector MeasurementOperator::apply(const Vector& x) const {
  const Node& n = *node_;
  require_square_len(x, n.cols, "forward");
  switch (n.kind) {
    case Kind::MacroMask:
      return mask_forward(n, x);
    case Kind::WalshSubset:
      return walsh_forward(n, x);
    case Kind::Stacked: {
      Vector y(n.rows);
      Index offset = 0;
      for (const auto& c : n.children) {
        y.segment(offset, c.rows()) = c.apply(x);
        offset += c.rows();
      }
      return y;
    }
  }
  return {};
}

Vector MeasurementOperator::apply_adjoint(const Vector& y) const {
  const Node& n = *node_;
  require_square_len(y, n.rows, "adjoint");
  switch (n.kind) {
    case Kind::MacroMask:
      return mask_adjoint(n, y);
    case Kind::WalshSubset:
      return walsh_adjoint(n, y);
    case Kind::Stacked: {
      Vector x = Vector::Zero(n.cols);
      Index offset = 0;
      for (const auto& c : n.children) {
        x += c.apply_adjoint(y.segment(offset, c.rows()));
        offset += c.rows();
      }
      return x;
    }
  }
  return {};
}

std::vector<MeasurementOperator> MeasurementOperator::blocks() const {
  if (node_->kind == Kind::Stacked) return node_->children;
  return {*this};
}

MeasurementOperator stack(const MeasurementOperator& a, const MeasurementOperator& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("stack: column mismatch " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
  }
  auto n = std::make_shared<MeasurementOperator::Node>();
  n->kind = MeasurementOperator::Kind::Stacked;
  n->cols = a.cols();
  for (const auto* part : {&a, &b}) {
    for (auto& leaf : part->blocks())
      if (leaf.rows() > 0) n->children.push_back(leaf);
  }
  for (const auto& c : n->children) n->rows += c.rows();
  return MeasurementOperator(std::move(n));
}

MeasurementOperator build_macro_mask_operator(Index window_side, Index macro_side, MaskScheme scheme,
                                              Index num_masks, std::uint64_t seed) {
  return MeasurementOperator::macro_mask(MaskEnsemble{window_side, macro_side, scheme, num_masks, seed});
}

MeasurementOperator build_walsh_operator(const WalshSamplingMap& map) {
  return MeasurementOperator::walsh(map);
}

CycleCost cycle_cost(const MeasurementOperator& op) { return op.cycle_cost(); }

Matrix to_dense(const LinearOperator& op) {
  Matrix m(op.rows(), op.cols());
  Vector e = Vector::Zero(op.cols());
  for (Index j = 0; j < op.cols(); ++j) {
    e[j] = 1.0;
    m.col(j) = op.apply(e);
    e[j] = 0.0;
  }
  return m;
}

/* GridLift ------------------------------------------------------------------ */

GridLift::GridLift(std::shared_ptr<const LinearOperator> base, Index fine_side, Index factor)
    : base_(std::move(base)), fine_side_(fine_side), factor_(factor) {
  if (factor < 1 || fine_side % factor != 0) throw DimensionError("lift factor must divide the side");
  if (base_->cols() != fine_side * fine_side) throw DimensionError("lift: base operator size mismatch");
  coarse_side_ = fine_side / factor;
}

Vector GridLift::apply(const Vector& x) const {
  require_square_len(x, cols(), "lifted forward");
  return base_->apply(replicate(x, fine_side_, factor_));
}

Vector GridLift::apply_adjoint(const Vector& y) const {
  return block_sums(base_->apply_adjoint(y), fine_side_, factor_);
}

double estimate_norm_squared(const LinearOperator& op, int iterations, std::uint64_t seed) {
  if (op.rows() == 0) return 0.0;
  Rng rng(seed);
  Vector x(op.cols());
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
  x.normalize();
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector z = op.apply_adjoint(op.apply(x));
    estimate = z.norm();
    if (estimate == 0.0) return 0.0;
    x = z / estimate;
  }
  return estimate;
}

}  // namespace rps
