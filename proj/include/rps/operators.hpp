#pragma once

#include <array>
#include <memory>
#include <vector>

#include "json.hpp"
#include "rps/common.hpp"

namespace rps {

/// Matrix-free linear map between flat real vectors.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual Vector apply(const Vector& x) const = 0;
  virtual Vector apply_adjoint(const Vector& y) const = 0;
};

/// Explicit matrix, used for small certified problems and test oracles.
class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(Matrix m) : m_(std::move(m)) {}
  Index rows() const override { return m_.rows(); }
  Index cols() const override { return m_.cols(); }
  Vector apply(const Vector& x) const override { return m_ * x; }
  Vector apply_adjoint(const Vector& y) const override { return m_.transpose() * y; }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Dense materialisation of any operator, column by column.
Matrix to_dense(const LinearOperator& op);

enum class MaskScheme { Binary01, Rademacher };

struct MaskEnsemble {
  Index window_side = 0;
  Index macro_side = 1;
  MaskScheme scheme = MaskScheme::Binary01;
  Index num_masks = 0;
  std::uint64_t seed = 0;
};

enum class WalshLevel { Low = 0, Mid = 1, High = 2 };

/// Multi-level sampling map on a square sequency grid. Index (u, v) is stored
/// as u * window_side + v; u is the vertical sequency.
struct WalshSamplingMap {
  Index window_side = 0;
  Index s_low = 0;
  Index s_mid = 0;
  std::array<Index, 3> counts{};
  std::vector<Index> selected;  // sorted, unique
  std::uint64_t seed = 0;

  WalshLevel level_of(Index u, Index v) const;
  std::vector<Index> indices_in(WalshLevel level) const;
  Index total() const { return counts[0] + counts[1] + counts[2]; }

  nlohmann::json to_json() const;
  static WalshSamplingMap from_json(const nlohmann::json& j);
};

/// Low level is the largest fully sampled square s_low^2 <= fraction_low *
/// budget; the rest is split between mid and high in proportion to their
/// fractions and drawn uniformly without replacement inside each region.
WalshSamplingMap design_sampling_map(Index window_side, Index total_budget,
                                     std::array<double, 3> level_fractions, std::uint64_t seed);

/// Level fractions reproducing the per-band counts used for 32, 64 and 128
/// pixel RoIs at a 20% budget; other sides use the 128 proportions.
std::array<double, 3> multilevel_fractions(Index window_side);

struct CycleCost {
  Index logical = 0;
  Index physical = 0;

  CycleCost& operator+=(const CycleCost& o) {
    logical += o.logical;
    physical += o.physical;
    return *this;
  }
  bool operator==(const CycleCost&) const = default;
};

/// Immutable, cheaply copyable measurement operator acting on a
/// window_side x window_side image in row-major order.
class MeasurementOperator final : public LinearOperator {
 public:
  enum class Kind { MacroMask, WalshSubset, Stacked };

  static MeasurementOperator macro_mask(const MaskEnsemble& ensemble);
  static MeasurementOperator walsh(const WalshSamplingMap& map);
  static MeasurementOperator walsh_level(const WalshSamplingMap& map, WalshLevel level);
  static MeasurementOperator walsh_indices(Index window_side, std::vector<Index> indices);
  /// Operator with no rows; the identity element of stack().
  static MeasurementOperator empty(Index cols);

  Kind kind() const;
  Index rows() const override;
  Index cols() const override;
  double column_scale() const;
  CycleCost cycle_cost() const;

  Vector apply(const Vector& x) const override;
  Vector apply_adjoint(const Vector& y) const override;

  /// Leaves of a stacked operator (the operator itself otherwise).
  std::vector<MeasurementOperator> blocks() const;

  /// Mask entry (0/1 or -1/+1, unscaled) of row r at macro pixel k.
  int mask_entry(Index r, Index k) const;
  const MaskEnsemble* ensemble() const;

  struct Node;

 private:
  explicit MeasurementOperator(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  friend MeasurementOperator stack(const MeasurementOperator& a, const MeasurementOperator& b);
  std::shared_ptr<const Node> node_;
};

MeasurementOperator build_macro_mask_operator(Index window_side, Index macro_side,
                                              MaskScheme scheme, Index num_masks,
                                              std::uint64_t seed);
MeasurementOperator build_walsh_operator(const WalshSamplingMap& map);

/// Vertical concatenation [a; b]; the adjoint sums the children's adjoints.
MeasurementOperator stack(const MeasurementOperator& a, const MeasurementOperator& b);

CycleCost cycle_cost(const MeasurementOperator& op);

/// base composed with pixel replication: maps a (side/factor)^2 grid onto the
/// side^2 grid expected by base. The adjoint is block summation.
class GridLift final : public LinearOperator {
 public:
  GridLift(std::shared_ptr<const LinearOperator> base, Index fine_side, Index factor);

  Index rows() const override { return base_->rows(); }
  Index cols() const override { return coarse_side_ * coarse_side_; }
  Vector apply(const Vector& x) const override;
  Vector apply_adjoint(const Vector& y) const override;
  Index coarse_side() const { return coarse_side_; }

 private:
  std::shared_ptr<const LinearOperator> base_;
  Index fine_side_;
  Index factor_;
  Index coarse_side_;
};

/// Largest singular value squared, by power iteration with a fixed seed.
double estimate_norm_squared(const LinearOperator& op, int iterations = 30,
                             std::uint64_t seed = 0x5EEDULL);

}  // namespace rps
