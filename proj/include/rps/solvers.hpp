#pragma once

#include <optional>

#include "json.hpp"
#include "rps/operators.hpp"
#include "rps/transforms.hpp"

namespace rps {

struct SolverOptions {
  int max_iters = 20000;
  int continuation_rounds = 8;
  double gamma = 0.0;  // BPDN data weight; <= 0 picks one from the data
  double beta1 = 1.0;
  double beta2 = 0.4;
  double eta = 0.0;  // squared radius of the residual ball
  double tol = 1e-4;

  void validate() const;
  nlohmann::json to_json() const;
  static SolverOptions from_json(const nlohmann::json& j);
};

struct SolveReport {
  Vector solution;
  int iterations_used = 0;
  double final_objective = 0.0;
  double residual_norm = 0.0;  // ||y - A x||, recomputed at exit
  bool converged = false;

  nlohmann::json to_json() const;
};

/// min ||W x||_1 + gamma ||y - A x||^2 by accelerated proximal gradient with
/// restart, continued over increasing gamma. Accepted iterates never increase
/// the objective of the round they belong to.
SolveReport solve_analysis_bpdn(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                                const SolverOptions& opts,
                                const std::optional<Vector>& initial = std::nullopt);

/// min beta1 ||W x||_1 + beta2 TV(x)  s.t.  ||y - A x||^2 <= eta, by a
/// primal-dual splitting on the constraint. The returned point is the
/// feasible iterate with the smallest regulariser.
SolveReport solve_analysis_tv(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                              const SolverOptions& opts,
                              const std::optional<Vector>& initial = std::nullopt);

/// Square-grid conveniences; the grid side is sqrt(A.cols()).
SolveReport solve_analysis_bpdn(const LinearOperator& A, const TransformSpec& W, const Vector& y,
                                const SolverOptions& opts);
SolveReport solve_analysis_tv(const LinearOperator& A, const TransformSpec& W, const Vector& y,
                              const SolverOptions& opts);

/// Objective values used by the solvers, exposed for tests.
double bpdn_objective(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                      double gamma, const Vector& x);
double analysis_tv_regulariser(const SparsityTransform& W, double beta1, double beta2,
                               const Vector& x);

/// Certified solution of min 1/2 ||A z - y||^2 + alpha ||W z||_1 for small
/// dense problems (at most 256 unknowns, W invertible).
struct ReferenceSolution {
  Vector x;             // minimiser
  Vector coefficients;  // W x
  Vector subgradient;   // q in the subdifferential of ||.||_1 at W x
  double optimality_residual = 0.0;  // ||A^T(Ax - y) + alpha W^T q||_inf
  int sweeps = 0;
};

inline constexpr Index kReferenceMaxUnknowns = 256;

/// Throws NumericalError when the optimality conditions cannot be certified
/// to 1e-10.
ReferenceSolution high_precision_reference_solve(const Matrix& A, const Matrix& W, const Vector& y,
                                                 double alpha);

/// Smallest-norm d with A d as close to r as possible, by conjugate gradients
/// on the normal equations.
Vector cgls(const LinearOperator& A, const Vector& r, int max_iters, double tol);

}  // namespace rps
