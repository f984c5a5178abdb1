#include "rps/verification.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "rps/solvers.hpp"

namespace rps {

void validate_l1_subgradient(const Vector& x, const Vector& p, double tol) {
  if (x.size() != p.size()) throw DimensionError("subgradient length does not match the point");
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(p[i]) > 1.0 + tol) {
      throw ConfigError("entry " + std::to_string(i) + " has |p| > 1; not a subgradient");
    }
    if (x[i] != 0.0 && std::abs(p[i] - (x[i] > 0 ? 1.0 : -1.0)) > tol) {
      throw ConfigError("entry " + std::to_string(i) + " has p != sign(x); not a subgradient");
    }
  }
}

double symmetric_bregman_l1(const Vector& x_c, const Vector& x_r, const Vector& p_c,
                            const Vector& p_r) {
  if (x_c.size() != x_r.size()) throw DimensionError("Bregman distance: point lengths differ");
  validate_l1_subgradient(x_c, p_c);
  validate_l1_subgradient(x_r, p_r);
  return (p_c - p_r).dot(x_c - x_r);
}

double bregman_sign_mismatch(const Vector& x_c, const Vector& x_r) {
  if (x_c.size() != x_r.size()) throw DimensionError("Bregman distance: point lengths differ");
  double total = 0.0;
  for (Index i = 0; i < x_c.size(); ++i) {
    const int sc = (x_c[i] > 0) - (x_c[i] < 0);
    const int sr = (x_r[i] > 0) - (x_r[i] < 0);
    if (sc != sr) total += std::abs(x_r[i] - x_c[i]);
  }
  return 2.0 * total;
}

nlohmann::json BoundCheck::to_json() const {
  return {{"lhs_residual_term", lhs_residual_term},
          {"lhs_bregman_term", lhs_bregman_term},
          {"rhs", rhs},
          {"holds", holds}};
}

nlohmann::json ExpectedBoundSummary::to_json() const {
  return {{"trials", trials},     {"holds_count", holds_count}, {"mean_lhs", mean_lhs},
          {"mean_rhs", mean_rhs}, {"se_lhs", se_lhs},           {"se_rhs", se_rhs},
          {"passes", passes}};
}

BoundCheck check_refinement_bound(const Matrix& A_c, const Matrix& B, const Vector& x_true,
                                  double alpha, const Matrix& W_in) {
  const Index n = x_true.size();
  if (A_c.cols() != n || (B.rows() > 0 && B.cols() != n)) {
    throw DimensionError("bound check: operator columns do not match the scene");
  }
  const Matrix W = W_in.size() == 0 ? Matrix(Matrix::Identity(n, n)) : W_in;

  Matrix A_r(A_c.rows() + B.rows(), n);
  A_r.topRows(A_c.rows()) = A_c;
  if (B.rows() > 0) A_r.bottomRows(B.rows()) = B;

  const Vector y_c = A_c * x_true;
  const Vector y_b = B.rows() > 0 ? Vector(B * x_true) : Vector();
  Vector y_r(A_r.rows());
  y_r << y_c, y_b;

  const ReferenceSolution coarse = high_precision_reference_solve(A_c, W, y_c, alpha);
  const ReferenceSolution refined = high_precision_reference_solve(A_r, W, y_r, alpha);

  BoundCheck out;
  const Vector v = coarse.x - refined.x;
  out.lhs_residual_term = 0.5 * (A_r * v).squaredNorm();
  // The subgradient of z -> ||W z||_1 is W^T q, so the inner product can be
  // taken in coefficient space.
  out.lhs_bregman_term =
      alpha > 0.0 ? alpha * symmetric_bregman_l1(coarse.coefficients, refined.coefficients,
                                                 coarse.subgradient, refined.subgradient)
                  : 0.0;
  out.rhs = B.rows() > 0 ? 0.5 * (y_b - B * coarse.x).squaredNorm() : 0.0;
  out.holds = out.lhs() <= out.rhs + kBoundSlack;
  return out;
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(rows, 1)));
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = s * rng.normal();
  return m;
}

Matrix dct_matrix_dense(Index n) {
  Matrix m(n, n);
  for (Index k = 0; k < n; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (Index i = 0; i < n; ++i) m(k, i) = a * std::cos(M_PI * (2 * i + 1) * k / (2.0 * n));
  }
  return m;
}

ExpectedBoundSummary check_expected_bound(const Matrix& A_c, const Vector& x_true, Index b_rows,
                                          double alpha, const Matrix& W, int trials,
                                          std::uint64_t seed) {
  if (trials < 2) throw ConfigError("expected bound check needs at least two trials");
  ExpectedBoundSummary s;
  s.trials = trials;
  std::vector<double> lhs(static_cast<std::size_t>(trials));
  std::vector<double> rhs(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const Matrix B = gaussian_matrix(b_rows, x_true.size(), rng);
    const BoundCheck c = check_refinement_bound(A_c, B, x_true, alpha, W);
    lhs[static_cast<std::size_t>(t)] = c.lhs();
    rhs[static_cast<std::size_t>(t)] = c.rhs;
    s.holds_count += c.holds ? 1 : 0;
  }
  auto mean_se = [trials](const std::vector<double>& v, double& mean, double& se) {
    double sum = 0.0;
    for (double a : v) sum += a;
    mean = sum / trials;
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    se = std::sqrt(ss / (trials - 1) / trials);
  };
  mean_se(lhs, s.mean_lhs, s.se_lhs);
  mean_se(rhs, s.mean_rhs, s.se_rhs);
  const double se = std::sqrt(s.se_lhs * s.se_lhs + s.se_rhs * s.se_rhs);
  s.passes = s.mean_lhs <= s.mean_rhs + 2.0 * se;
  return s;
}

std::vector<SweepRow> bound_sweep(Index n, Index rows_c, Index rows_b,
                                  const std::vector<double>& alphas, int instances,
                                  const Matrix& W_in, std::uint64_t seed) {
  const Matrix W = W_in.size() == 0 ? Matrix(Matrix::Identity(n, n)) : W_in;
  std::vector<SweepRow> out;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    SweepRow row;
    row.alpha = alphas[a];
    row.n = n;
    row.rows_c = rows_c;
    row.rows_b = rows_b;
    row.instances = instances;
    for (int i = 0; i < instances; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(a * 100003 + static_cast<std::size_t>(i))));
      const Matrix A_c = gaussian_matrix(rows_c, n, rng);
      const Matrix B = gaussian_matrix(rows_b, n, rng);
      // Sparse coefficients, a quarter of them active.
      Vector c = Vector::Zero(n);
      for (Index k = 0; k < n; ++k)
        if (rng.uniform() < 0.25) c[k] = rng.normal();
      const Vector x = W.transpose() * c;
      const BoundCheck check = check_refinement_bound(A_c, B, x, row.alpha, W);
      row.holds += check.holds ? 1 : 0;
      row.mean_lhs += check.lhs() / instances;
      row.mean_rhs += check.rhs / instances;
    }
    out.push_back(row);
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "alpha,n,rows_c,rows_b,instances,holds,holds_rate,mean_lhs,mean_rhs\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%lld,%lld,%lld,%d,%d,%.17g,%.17g,%.17g\n", r.alpha,
                  static_cast<long long>(r.n), static_cast<long long>(r.rows_c),
                  static_cast<long long>(r.rows_b), r.instances, r.holds,
                  static_cast<double>(r.holds) / r.instances, r.mean_lhs, r.mean_rhs);
    out << buf;
  }
}

}  // namespace rps
