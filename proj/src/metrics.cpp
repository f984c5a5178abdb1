#include "rps/metrics.hpp"

#include <string>

namespace rps {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shapes differ (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

std::vector<bool> outside_mask(Index rows, Index cols, const std::vector<RoIWindow>& excluded) {
  std::vector<bool> keep(static_cast<std::size_t>(rows * cols), true);
  for (const auto& w : excluded) {
    for (Index r = std::max<Index>(0, w.row_offset); r < std::min(rows, w.row_end()); ++r)
      for (Index c = std::max<Index>(0, w.col_offset); c < std::min(cols, w.col_end()); ++c)
        keep[static_cast<std::size_t>(r * cols + c)] = false;
  }
  return keep;
}

}  // namespace

double nmse(const Image& estimate, const Image& reference) {
  require_same_shape(estimate, reference, "nmse");
  const double denom = reference.data().squaredNorm();
  if (denom == 0.0) throw NumericalError("nmse: reference image is identically zero");
  return (estimate.data() - reference.data()).squaredNorm() / denom;
}

Image ssim_map(const Image& a, const Image& b, const SsimParams& p) {
  require_same_shape(a, b, "ssim");
  const Index w = p.window;
  if (w < 1 || a.rows() < w || a.cols() < w) {
    throw DimensionError("ssim: image smaller than the " + std::to_string(w) + "x" +
                         std::to_string(w) + " window");
  }
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const double n = static_cast<double>(w * w);
  const Index out_rows = a.rows() - w + 1;
  const Index out_cols = a.cols() - w + 1;
  Vector out(out_rows * out_cols);
  for (Index r = 0; r < out_rows; ++r) {
    for (Index c = 0; c < out_cols; ++c) {
      double sa = 0, sb = 0;
      for (Index i = 0; i < w; ++i)
        for (Index j = 0; j < w; ++j) {
          sa += a(r + i, c + j);
          sb += b(r + i, c + j);
        }
      const double ma = sa / n;
      const double mb = sb / n;
      double vaa = 0, vbb = 0, vab = 0;
      for (Index i = 0; i < w; ++i)
        for (Index j = 0; j < w; ++j) {
          const double da = a(r + i, c + j) - ma;
          const double db = b(r + i, c + j) - mb;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      vaa /= n;
      vbb /= n;
      vab /= n;
      out[r * out_cols + c] =
          ((2 * ma * mb + c1) * (2 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
    }
  }
  return Image(out_rows, out_cols, std::move(out));
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  return ssim_map(a, b, params).mean();
}

double ssim_outside(const Image& a, const Image& b, const std::vector<RoIWindow>& excluded,
                    const SsimParams& params) {
  const Image local = ssim_map(a, b, params);
  const Index w = params.window;
  double total = 0.0;
  Index count = 0;
  for (Index r = 0; r < local.rows(); ++r) {
    for (Index c = 0; c < local.cols(); ++c) {
      const RoIWindow probe{r, c, w, 1, 0};
      bool touches = false;
      for (const auto& e : excluded) touches = touches || probe.overlaps(e);
      if (touches) continue;
      total += local(r, c);
      ++count;
    }
  }
  if (count == 0) throw DimensionError("ssim_outside: no window lies outside the excluded regions");
  return total / static_cast<double>(count);
}

double nmse_outside(const Image& estimate, const Image& reference,
                    const std::vector<RoIWindow>& excluded) {
  require_same_shape(estimate, reference, "nmse_outside");
  const auto keep = outside_mask(reference.rows(), reference.cols(), excluded);
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < reference.size(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    const double d = estimate.data()[i] - reference.data()[i];
    num += d * d;
    den += reference.data()[i] * reference.data()[i];
  }
  if (den == 0.0) throw NumericalError("nmse_outside: reference is zero outside the regions");
  return num / den;
}

MetricReport evaluate(const Image& estimate, const Image& reference, const SsimParams& params) {
  return MetricReport{nmse(estimate, reference), ssim(estimate, reference, params)};
}

}  // namespace rps
