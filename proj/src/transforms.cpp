#include "rps/transforms.hpp"

#include <cmath>
#include <string>

namespace rps {

namespace {

Index bit_reverse(Index k, int bits) {
  Index r = 0;
  for (int b = 0; b < bits; ++b) {
    r = (r << 1) | (k & 1);
    k >>= 1;
  }
  return r;
}

void require_walsh_dims(Index rows, Index cols) {
  if (!is_power_of_two(rows) || !is_power_of_two(cols)) {
    throw DimensionError("Walsh transform needs power-of-two sides, got " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
}

// Separable application of a 1D in-place kernel over rows then columns.
template <class Kernel>
void separable(Vector& data, Index rows, Index cols, Kernel&& kernel) {
  std::vector<double> buf(static_cast<std::size_t>(std::max(rows, cols)));
  for (Index r = 0; r < rows; ++r) {
    std::span<double> row(data.data() + r * cols, static_cast<std::size_t>(cols));
    kernel(row);
  }
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) buf[r] = data[r * cols + c];
    kernel(std::span<double>(buf.data(), static_cast<std::size_t>(rows)));
    for (Index r = 0; r < rows; ++r) data[r * cols + c] = buf[r];
  }
}

Matrix dct_matrix(Index n) {
  Matrix m(n, n);
  const double a0 = std::sqrt(1.0 / n);
  const double ak = std::sqrt(2.0 / n);
  for (Index k = 0; k < n; ++k)
    for (Index j = 0; j < n; ++j)
      m(k, j) = (k == 0 ? a0 : ak) * std::cos(M_PI * (2.0 * j + 1.0) * k / (2.0 * n));
  return m;
}

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Vector dct_apply(const Vector& x, Index rows, Index cols, const Matrix& cr, const Matrix& cc,
                 bool inverse) {
  Eigen::Map<const RowMajorMatrix> X(x.data(), rows, cols);
  RowMajorMatrix Y = inverse ? RowMajorMatrix(cr.transpose() * X * cc)
                             : RowMajorMatrix(cr * X * cc.transpose());
  return Eigen::Map<const Vector>(Y.data(), rows * cols);
}

// db8: 16-tap Daubechies scaling filter, 8 vanishing moments.
const std::vector<double> kDb8 = {
    0.05441584224310400995501,  0.3128715909142999706592,    0.6756307362972898068078,
    0.5853546836542067127713,   -0.01582910525634930566738,  -0.2840155429615469265162,
    0.0004724845739132827703606, 0.128747426620478458857,    -0.01736930100180754616962,
    -0.04408825393079475150676, 0.01398102791739828164872,   0.008746094047405776716383,
    -0.004870352993451574310422, -0.0003917403733769470462981, 0.0006754494064505693663695,
    -0.0001174767841247695337306};

const std::vector<double> kHaar = {M_SQRT1_2, M_SQRT1_2};

// One periodised analysis step on v[0..n): approximations then details.
void dwt_step(std::span<double> v, const std::vector<double>& h, std::vector<double>& tmp) {
  const std::size_t n = v.size();
  const std::size_t half = n / 2;
  const std::size_t taps = h.size();
  tmp.assign(n, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    double a = 0.0;
    double d = 0.0;
    for (std::size_t i = 0; i < taps; ++i) {
      const double x = v[(2 * k + i) % n];
      const double g = (i % 2 == 0 ? 1.0 : -1.0) * h[taps - 1 - i];
      a += h[i] * x;
      d += g * x;
    }
    tmp[k] = a;
    tmp[half + k] = d;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = tmp[i];
}

void idwt_step(std::span<double> v, const std::vector<double>& h, std::vector<double>& tmp) {
  const std::size_t n = v.size();
  const std::size_t half = n / 2;
  const std::size_t taps = h.size();
  tmp.assign(n, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double a = v[k];
    const double d = v[half + k];
    for (std::size_t i = 0; i < taps; ++i) {
      const double g = (i % 2 == 0 ? 1.0 : -1.0) * h[taps - 1 - i];
      tmp[(2 * k + i) % n] += h[i] * a + g * d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = tmp[i];
}

void require_wavelet_dims(Index rows, Index cols, int levels) {
  if (levels < 1) throw DimensionError("wavelet levels must be >= 1");
  const Index block = Index{1} << levels;
  if (rows % block != 0 || cols % block != 0) {
    throw DimensionError("grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " not divisible by 2^" + std::to_string(levels));
  }
}

void dwt_inplace(Vector& data, Index rows, Index cols, int levels, const std::vector<double>& h) {
  std::vector<double> tmp;
  std::vector<double> col;
  for (int lev = 0; lev < levels; ++lev) {
    const Index r = rows >> lev;
    const Index c = cols >> lev;
    for (Index i = 0; i < r; ++i)
      dwt_step(std::span<double>(data.data() + i * cols, static_cast<std::size_t>(c)), h, tmp);
    col.resize(static_cast<std::size_t>(r));
    for (Index j = 0; j < c; ++j) {
      for (Index i = 0; i < r; ++i) col[i] = data[i * cols + j];
      dwt_step(col, h, tmp);
      for (Index i = 0; i < r; ++i) data[i * cols + j] = col[i];
    }
  }
}

void idwt_inplace(Vector& data, Index rows, Index cols, int levels, const std::vector<double>& h) {
  std::vector<double> tmp;
  std::vector<double> col;
  for (int lev = levels - 1; lev >= 0; --lev) {
    const Index r = rows >> lev;
    const Index c = cols >> lev;
    col.resize(static_cast<std::size_t>(r));
    for (Index j = 0; j < c; ++j) {
      for (Index i = 0; i < r; ++i) col[i] = data[i * cols + j];
      idwt_step(col, h, tmp);
      for (Index i = 0; i < r; ++i) data[i * cols + j] = col[i];
    }
    for (Index i = 0; i < r; ++i)
      idwt_step(std::span<double>(data.data() + i * cols, static_cast<std::size_t>(c)), h, tmp);
  }
}

void walsh_inplace(Vector& data, Index rows, Index cols) {
  separable(data, rows, cols, [](std::span<double> v) { walsh1d_inplace(v); });
}

}  // namespace

Index walsh_natural_index(Index k, Index n) {
  const int bits = log2_exact(n);
  return bit_reverse(k ^ (k >> 1), bits);
}

void walsh1d_inplace(std::span<double> v) {
  const auto n = static_cast<Index>(v.size());
  if (!is_power_of_two(n)) throw DimensionError("Walsh transform length must be a power of two");
  for (Index len = 1; len < n; len <<= 1) {
    for (Index i = 0; i < n; i += 2 * len) {
      for (Index j = i; j < i + len; ++j) {
        const double a = v[j];
        const double b = v[j + len];
        v[j] = a + b;
        v[j + len] = a - b;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> natural(v.begin(), v.end());
  for (Index k = 0; k < n; ++k) v[k] = natural[walsh_natural_index(k, n)] * scale;
}

Image walsh2d(const Image& img) {
  require_walsh_dims(img.rows(), img.cols());
  Vector d = img.data();
  walsh_inplace(d, img.rows(), img.cols());
  return Image(img.rows(), img.cols(), std::move(d));
}

Image iwalsh2d(const Image& coeffs) { return walsh2d(coeffs); }

Image dct2d(const Image& img) {
  return Image(img.rows(), img.cols(),
               dct_apply(img.data(), img.rows(), img.cols(), dct_matrix(img.rows()),
                         dct_matrix(img.cols()), false));
}

Image idct2d(const Image& coeffs) {
  return Image(coeffs.rows(), coeffs.cols(),
               dct_apply(coeffs.data(), coeffs.rows(), coeffs.cols(), dct_matrix(coeffs.rows()),
                         dct_matrix(coeffs.cols()), true));
}

const std::vector<double>& wavelet_filter(Wavelet w) { return w == Wavelet::DB8 ? kDb8 : kHaar; }

Image dwt2d(const Image& img, int levels, Wavelet w) {
  require_wavelet_dims(img.rows(), img.cols(), levels);
  Vector d = img.data();
  dwt_inplace(d, img.rows(), img.cols(), levels, wavelet_filter(w));
  return Image(img.rows(), img.cols(), std::move(d));
}

Image idwt2d(const Image& coeffs, int levels, Wavelet w) {
  require_wavelet_dims(coeffs.rows(), coeffs.cols(), levels);
  Vector d = coeffs.data();
  idwt_inplace(d, coeffs.rows(), coeffs.cols(), levels, wavelet_filter(w));
  return Image(coeffs.rows(), coeffs.cols(), std::move(d));
}

int clamp_wavelet_levels(Index rows, Index cols, int requested) {
  int levels = 0;
  while (levels < requested && rows % (Index{2} << levels) == 0 && cols % (Index{2} << levels) == 0)
    ++levels;
  return levels;
}

double tv_value(const Image& img) {
  const Index rows = img.rows();
  const Index cols = img.cols();
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const double x = img(r, c);
      const double dv = r + 1 < rows ? img(r + 1, c) - x : 0.0;
      const double dh = c + 1 < cols ? img(r, c + 1) - x : 0.0;
      total += std::sqrt(dv * dv + dh * dh);
    }
  }
  return total;
}

void tv_gradient(const Vector& x, Index rows, Index cols, Vector& out) {
  const Index n = rows * cols;
  out.resize(2 * n);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      out[i] = c + 1 < cols ? x[i + 1] - x[i] : 0.0;
      out[n + i] = r + 1 < rows ? x[i + cols] - x[i] : 0.0;
    }
  }
}

void tv_gradient_adjoint(const Vector& g, Index rows, Index cols, Vector& out) {
  const Index n = rows * cols;
  out.setZero(n);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      if (c + 1 < cols) {
        out[i + 1] += g[i];
        out[i] -= g[i];
      }
      if (r + 1 < rows) {
        out[i + cols] += g[n + i];
        out[i] -= g[n + i];
      }
    }
  }
}

SparsityTransform::SparsityTransform(TransformSpec spec, Index rows, Index cols)
    : spec_(spec), rows_(rows), cols_(cols) {
  switch (spec_.kind) {
    case TransformKind::Walsh2D:
      require_walsh_dims(rows, cols);
      break;
    case TransformKind::DCT2D:
      dct_rows_ = dct_matrix(rows);
      dct_cols_ = dct_matrix(cols);
      break;
    case TransformKind::DWT_DB8:
    case TransformKind::DWT_Haar:
      spec_.levels = clamp_wavelet_levels(rows, cols, spec.levels);
      if (spec_.levels < 1) spec_.kind = TransformKind::Identity;
      break;
    case TransformKind::Identity:
      break;
  }
}

Vector SparsityTransform::analysis(const Vector& x) const {
  Vector d = x;
  switch (spec_.kind) {
    case TransformKind::Identity:
      break;
    case TransformKind::Walsh2D:
      walsh_inplace(d, rows_, cols_);
      break;
    case TransformKind::DCT2D:
      return dct_apply(x, rows_, cols_, dct_rows_, dct_cols_, false);
    case TransformKind::DWT_DB8:
      dwt_inplace(d, rows_, cols_, spec_.levels, kDb8);
      break;
    case TransformKind::DWT_Haar:
      dwt_inplace(d, rows_, cols_, spec_.levels, kHaar);
      break;
  }
  return d;
}

Vector SparsityTransform::synthesis(const Vector& c) const {
  Vector d = c;
  switch (spec_.kind) {
    case TransformKind::Identity:
      break;
    case TransformKind::Walsh2D:
      walsh_inplace(d, rows_, cols_);
      break;
    case TransformKind::DCT2D:
      return dct_apply(c, rows_, cols_, dct_rows_, dct_cols_, true);
    case TransformKind::DWT_DB8:
      idwt_inplace(d, rows_, cols_, spec_.levels, kDb8);
      break;
    case TransformKind::DWT_Haar:
      idwt_inplace(d, rows_, cols_, spec_.levels, kHaar);
      break;
  }
  return d;
}

}  // namespace rps
