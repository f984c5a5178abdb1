#pragma once

#include <span>
#include <vector>

#include "rps/image.hpp"

namespace rps {

enum class TransformKind { Identity, Walsh2D, DCT2D, DWT_DB8, DWT_Haar };

struct TransformSpec {
  TransformKind kind = TransformKind::DWT_DB8;
  int levels = 3;  // wavelets only
};

enum class Wavelet { DB8, Haar };

/* Walsh–Hadamard ------------------------------------------------------------
 *
 * Sequency ordered and orthonormal: row k of the 1D matrix has exactly k sign
 * changes, entries are +-1/sqrt(n). The 2D transform is separable, so a
 * constant image c of side n maps to a single DC coefficient c*n. The
 * sequency-ordered matrix is symmetric, so walsh2d is its own inverse.
 */
Image walsh2d(const Image& img);
Image iwalsh2d(const Image& coeffs);

/// In-place orthonormal 1D transform in sequency order; size must be a power of two.
void walsh1d_inplace(std::span<double> v);

/// Natural (Hadamard) index of the sequency-ordered row k of a size-n transform.
Index walsh_natural_index(Index k, Index n);

/* Orthonormal DCT-II ------------------------------------------------------- */
Image dct2d(const Image& img);
Image idct2d(const Image& coeffs);

/* Periodised orthonormal wavelets ------------------------------------------ */

/// Low-pass analysis filter (sum sqrt(2), unit l2 norm).
const std::vector<double>& wavelet_filter(Wavelet w);

/// Mallat layout: coarse approximation in the top-left corner.
Image dwt2d(const Image& img, int levels, Wavelet w = Wavelet::DB8);
Image idwt2d(const Image& coeffs, int levels, Wavelet w = Wavelet::DB8);

/// Largest usable number of levels <= requested for a rows x cols grid.
int clamp_wavelet_levels(Index rows, Index cols, int requested);

/* Total variation ------------------------------------------------------------
 *
 * Forward differences with replicate boundary: differences leaving the last
 * row or column are zero.
 */
double tv_value(const Image& img);

/// Gradient field (dx then dy, each rows*cols long) of a row-major grid.
void tv_gradient(const Vector& x, Index rows, Index cols, Vector& out);
/// Adjoint of tv_gradient (negative divergence).
void tv_gradient_adjoint(const Vector& g, Index rows, Index cols, Vector& out);

/// Orthonormal sparsifying transform W bound to a grid; analysis is W x,
/// synthesis is W^T c = W^{-1} c.
class SparsityTransform {
 public:
  SparsityTransform(TransformSpec spec, Index rows, Index cols);

  Vector analysis(const Vector& x) const;
  Vector synthesis(const Vector& c) const;

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  const TransformSpec& spec() const { return spec_; }

 private:
  TransformSpec spec_;
  Index rows_;
  Index cols_;
  Matrix dct_rows_;
  Matrix dct_cols_;
};

}  // namespace rps
