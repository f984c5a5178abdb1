#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "rps/common.hpp"

namespace rps {

/// Throws ConfigError unless p is a subgradient of ||.||_1 at x, entrywise to tol.
void validate_l1_subgradient(const Vector& x, const Vector& p, double tol = 1e-9);

/// <p_C - p_R, x_C - x_R> after validating both subgradients.
double symmetric_bregman_l1(const Vector& x_c, const Vector& x_r, const Vector& p_c,
                            const Vector& p_r);

/// 2 * sum of |x_R - x_C| over entries whose signs differ; equals the inner
/// product form when all entries are nonzero and subgradients are the signs.
double bregman_sign_mismatch(const Vector& x_c, const Vector& x_r);

struct BoundCheck {
  double lhs_residual_term = 0.0;  // 1/2 ||A_R (x_C - x_R)||^2
  double lhs_bregman_term = 0.0;   // alpha * D(x_C, x_R)
  double rhs = 0.0;                // 1/2 ||y_B - B x_C||^2
  bool holds = false;

  double lhs() const { return lhs_residual_term + lhs_bregman_term; }
  nlohmann::json to_json() const;
};

inline constexpr double kBoundSlack = 1e-8;

/// Solves the coarse and refined penalised problems for y_C = A_C x and
/// y_B = B x with the certified reference solver and evaluates both sides of
/// the refinement inequality. W is the analysis transform (identity if empty).
BoundCheck check_refinement_bound(const Matrix& A_c, const Matrix& B, const Vector& x_true,
                                  double alpha, const Matrix& W = Matrix());

struct ExpectedBoundSummary {
  int trials = 0;
  int holds_count = 0;
  double mean_lhs = 0.0;
  double mean_rhs = 0.0;
  double se_lhs = 0.0;
  double se_rhs = 0.0;
  bool passes = false;  // mean_lhs <= mean_rhs + 2 standard errors

  nlohmann::json to_json() const;
};

/// Monte-Carlo version with B redrawn per trial as i.i.d. Gaussian entries of
/// variance 1 / b_rows.
ExpectedBoundSummary check_expected_bound(const Matrix& A_c, const Vector& x_true, Index b_rows,
                                          double alpha, const Matrix& W, int trials,
                                          std::uint64_t seed);

struct SweepRow {
  double alpha = 0.0;
  Index n = 0;
  Index rows_c = 0;
  Index rows_b = 0;
  int instances = 0;
  int holds = 0;
  double mean_lhs = 0.0;
  double mean_rhs = 0.0;
};

/// Random-instance sweep: Gaussian A_C and B, sparse ground truth under W.
std::vector<SweepRow> bound_sweep(Index n, Index rows_c, Index rows_b,
                                  const std::vector<double>& alphas, int instances,
                                  const Matrix& W, std::uint64_t seed);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

/// n x n Gaussian matrix with entries of variance 1 / rows.
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng);

/// Orthonormal DCT-II matrix of size n.
Matrix dct_matrix_dense(Index n);

}  // namespace rps
