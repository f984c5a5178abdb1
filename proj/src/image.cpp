#include "rps/image.hpp"

#include <algorithm>
#include <string>

namespace rps {

namespace {

void require_finite(const Vector& v) {
  if (!v.allFinite()) throw NumericalError("image contains non-finite entries");
}

void require_divisible(const Image& img, Index macro_side, const char* what) {
  if (macro_side < 1) throw DimensionError(std::string(what) + ": macro side must be >= 1");
  if (img.rows() % macro_side != 0 || img.cols() % macro_side != 0) {
    throw DimensionError(std::string(what) + ": image " + std::to_string(img.rows()) + "x" +
                         std::to_string(img.cols()) + " not divisible by macro side " +
                         std::to_string(macro_side));
  }
}

}  // namespace

Image::Image(Index rows, Index cols, double fill) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1) throw DimensionError("image dimensions must be positive");
  data_ = Vector::Constant(rows * cols, fill);
  require_finite(data_);
}

Image::Image(Index rows, Index cols, Vector data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 1 || cols < 1) throw DimensionError("image dimensions must be positive");
  if (data_.size() != rows * cols) {
    throw DimensionError("image data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  require_finite(data_);
}

void RoIWindow::validate(Index scene_rows, Index scene_cols) const {
  if (!is_power_of_two(side)) throw DimensionError("RoI side must be a power of two");
  if (current_macro < 1 || side % current_macro != 0) {
    throw DimensionError("RoI macro size must divide the RoI side");
  }
  if (row_offset < 0 || col_offset < 0 || row_end() > scene_rows || col_end() > scene_cols) {
    throw BoundsError("RoI " + std::to_string(label) + " at (" + std::to_string(row_offset) +
                      "," + std::to_string(col_offset) + ") side " + std::to_string(side) +
                      " lies outside the scene");
  }
}

RoIWindow RoIWindow::refined() const {
  if (current_macro <= 1) throw DimensionError("RoI is already at native resolution");
  RoIWindow next = *this;
  next.current_macro = current_macro / 2;
  return next;
}

bool RoIWindow::overlaps(const RoIWindow& o) const {
  return row_offset < o.row_end() && o.row_offset < row_end() && col_offset < o.col_end() &&
         o.col_offset < col_end();
}

MacroGrid MacroGrid::make(Index window_side, Index macro_side) {
  if (window_side < 1 || macro_side < 1 || window_side % macro_side != 0) {
    throw DimensionError("macro side must divide the window side");
  }
  return MacroGrid{window_side, macro_side};
}

Image macro_block_sum(const Image& img, Index macro_side) {
  require_divisible(img, macro_side, "macro_block_sum");
  const Index out_rows = img.rows() / macro_side;
  const Index out_cols = img.cols() / macro_side;
  Vector out = Vector::Zero(out_rows * out_cols);
  const Vector& in = img.data();
  for (Index r = 0; r < img.rows(); ++r) {
    const Index orow = (r / macro_side) * out_cols;
    const Index base = r * img.cols();
    for (Index c = 0; c < img.cols(); ++c) out[orow + c / macro_side] += in[base + c];
  }
  return Image(out_rows, out_cols, std::move(out));
}

Image macro_downsample(const Image& img, Index macro_side) {
  const MacroGrid rows = MacroGrid::make(img.rows(), macro_side);
  const MacroGrid cols = MacroGrid::make(img.cols(), macro_side);
  const Index out_rows = rows.grid_side();
  const Index out_cols = cols.grid_side();
  const double count = static_cast<double>(macro_side * macro_side);
  Vector out(out_rows * out_cols);
  // Deviations from the block's first pixel keep constant blocks exact.
  for (Index br = 0; br < out_rows; ++br) {
    for (Index bc = 0; bc < out_cols; ++bc) {
      const double anchor = img(br * macro_side, bc * macro_side);
      double dev = 0.0;
      for (Index r = br * macro_side; r < (br + 1) * macro_side; ++r)
        for (Index c = bc * macro_side; c < (bc + 1) * macro_side; ++c) dev += img(r, c) - anchor;
      out[br * out_cols + bc] = anchor + dev / count;
    }
  }
  return Image(out_rows, out_cols, std::move(out));
}

Image macro_upsample(const Image& img, Index macro_side) {
  if (macro_side < 1) throw DimensionError("macro_upsample: macro side must be >= 1");
  if (macro_side == 1) return img;
  const Index out_rows = img.rows() * macro_side;
  const Index out_cols = img.cols() * macro_side;
  Vector out(out_rows * out_cols);
  const Vector& in = img.data();
  for (Index r = 0; r < out_rows; ++r) {
    const Index irow = (r / macro_side) * img.cols();
    const Index base = r * out_cols;
    for (Index c = 0; c < out_cols; ++c) out[base + c] = in[irow + c / macro_side];
  }
  return Image(out_rows, out_cols, std::move(out));
}

Image extract_window(const Image& scene, const RoIWindow& roi) {
  roi.validate(scene.rows(), scene.cols());
  Image out(roi.side, roi.side);
  for (Index r = 0; r < roi.side; ++r)
    for (Index c = 0; c < roi.side; ++c) out(r, c) = scene(roi.row_offset + r, roi.col_offset + c);
  return out;
}

Image paste_window(const Image& scene, const RoIWindow& roi, const Image& patch) {
  roi.validate(scene.rows(), scene.cols());
  if (patch.rows() != roi.side || patch.cols() != roi.side) {
    throw DimensionError("paste_window: patch does not match the RoI side");
  }
  Image out = scene;
  for (Index r = 0; r < roi.side; ++r)
    for (Index c = 0; c < roi.side; ++c) out(roi.row_offset + r, roi.col_offset + c) = patch(r, c);
  return out;
}

Image clamp_unit(const Image& img) {
  Vector d = img.data().cwiseMax(0.0).cwiseMin(1.0);
  return Image(img.rows(), img.cols(), std::move(d));
}

}  // namespace rps
