#pragma once

#include <string>

#include "rps/common.hpp"

namespace rps {

/// Row-major real image. Entries are nominally in [0, 1] but solver iterates
/// may leave that range; clamping happens only on export.
class Image {
 public:
  Image() = default;
  Image(Index rows, Index cols, double fill = 0.0);
  Image(Index rows, Index cols, Vector data);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return rows_ * cols_; }
  bool empty() const { return size() == 0; }

  const Vector& data() const { return data_; }

  double operator()(Index r, Index c) const { return data_[r * cols_ + c]; }
  double& operator()(Index r, Index c) { return data_[r * cols_ + c]; }

  double sum() const { return data_.sum(); }
  double mean() const { return data_.mean(); }

  bool same_shape(const Image& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Vector data_;
};

/// Dyadic square sub-window of a scene together with its acquisition state.
struct RoIWindow {
  Index row_offset = 0;
  Index col_offset = 0;
  Index side = 0;
  Index current_macro = 8;
  int label = 0;

  Index row_end() const { return row_offset + side; }
  Index col_end() const { return col_offset + side; }
  Index num_pixels() const { return side * side; }

  // Throws BoundsError / DimensionError when the window is not a valid
  // sub-window of a rows x cols scene.
  void validate(Index scene_rows, Index scene_cols) const;

  // Halves current_macro; throws if already at the native resolution.
  RoIWindow refined() const;

  bool overlaps(const RoIWindow& other) const;

  bool operator==(const RoIWindow&) const = default;
};

struct MacroGrid {
  Index window_side = 0;
  Index macro_side = 1;

  static MacroGrid make(Index window_side, Index macro_side);

  Index grid_side() const { return window_side / macro_side; }
  Index num_macro_pixels() const { return grid_side() * grid_side(); }
};

/// Block means over macro_side x macro_side blocks.
Image macro_downsample(const Image& img, Index macro_side);

/// Pixel replication of every entry into a macro_side x macro_side block.
Image macro_upsample(const Image& img, Index macro_side);

/// Block sums; the adjoint of macro_upsample.
Image macro_block_sum(const Image& img, Index macro_side);

Image extract_window(const Image& scene, const RoIWindow& roi);
Image paste_window(const Image& scene, const RoIWindow& roi, const Image& patch);

/// Entries clamped to [0, 1] for export.
Image clamp_unit(const Image& img);

}  // namespace rps
