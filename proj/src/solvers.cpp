#include "rps/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace rps {

namespace {

// Power-method estimates approach ||A||^2 from below.
constexpr double kNormSafety = 1.02;

constexpr double kAutoGammaWeight = 1e8;

Vector soft_threshold(const Vector& v, double t) {
  return v.unaryExpr([t](double a) { return a > t ? a - t : (a < -t ? a + t : 0.0); });
}

void check_problem(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                   const char* what) {
  if (y.size() != A.rows()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(y.size()) +
                         " measurements for an operator with " + std::to_string(A.rows()) + " rows");
  }
  if (W.rows() * W.cols() != A.cols()) {
    throw DimensionError(std::string(what) + ": transform grid does not match operator columns");
  }
  if (!y.allFinite()) throw NumericalError(std::string(what) + ": measurements are not finite");
}

Index square_side(Index n) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) throw DimensionError("operator columns do not form a square grid");
  return side;
}

// Gradient field helpers operating on the stacked (dx, dy) layout.
void project_pointwise_ball(Vector& g, Index n, double radius) {
  for (Index i = 0; i < n; ++i) {
    const double norm = std::hypot(g[i], g[n + i]);
    if (norm > radius) {
      const double s = radius / norm;
      g[i] *= s;
      g[n + i] *= s;
    }
  }
}

// T A / s with T = I - (1 - keep) u u^T. When A has one dominant singular
// direction (0/1 masks carry the image mean in every row) u is its left
// singular vector and keep shrinks it to the size of the rest of the
// spectrum; s normalises the result to unit norm. T is symmetric and
// invertible, so T A x = T y has the same solutions as A x = y.
class Preconditioned final : public LinearOperator {
 public:
  explicit Preconditioned(const LinearOperator& A) : A_(A) {
    Rng rng(0x5EED);
    Vector v(A.cols());
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    v.normalize();
    double l1 = 0.0;
    for (int it = 0; it < 30; ++it) {
      const Vector z = A.apply_adjoint(A.apply(v));
      l1 = z.norm();
      if (l1 == 0.0) throw NumericalError("operator has zero norm");
      v = z / l1;
    }
    Vector w(A.cols());
    for (Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
    double l2 = 0.0;
    for (int it = 0; it < 30; ++it) {
      w -= v.dot(w) * v;
      const double wn = w.norm();
      if (wn == 0.0) break;
      w /= wn;
      Vector z = A.apply_adjoint(A.apply(w));
      z -= v.dot(z) * v;
      l2 = z.norm();
      w = z;
    }
    if (l2 > 0.0 && l2 < 0.25 * l1) {
      const Vector Av = A.apply(v);
      u_ = Av / Av.norm();
      keep_ = std::sqrt(l2 / l1);
    }
    scale_ = 1.0;
    scale_ = std::sqrt(estimate_norm_squared(*this, 30, 0x5EED) * kNormSafety);
    if (!(scale_ > 0.0)) throw NumericalError("operator has zero norm");
  }
  Index rows() const override { return A_.rows(); }
  Index cols() const override { return A_.cols(); }
  Vector apply(const Vector& x) const override { return left(A_.apply(x)); }
  Vector apply_adjoint(const Vector& r) const override { return A_.apply_adjoint(left(r)); }
  Vector left(const Vector& r) const {
    if (u_.size() == 0) return r / scale_;
    return (r - (1.0 - keep_) * u_.dot(r) * u_) / scale_;
  }
  double scale() const { return scale_; }

 private:
  const LinearOperator& A_;
  Vector u_;
  double keep_ = 1.0;
  double scale_ = 1.0;
};

SolveReport zero_report(const LinearOperator& A, const Vector& y) {
  SolveReport rep;
  rep.solution = Vector::Zero(A.cols());
  rep.residual_norm = y.norm();
  rep.converged = true;
  return rep;
}

}  // namespace

void SolverOptions::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (continuation_rounds < 1) throw ConfigError("continuation_rounds must be >= 1");
  if (beta1 < 0.0 || beta2 < 0.0 || beta1 + beta2 <= 0.0) {
    throw ConfigError("beta1 and beta2 must be nonnegative with a positive sum");
  }
  if (eta < 0.0) throw ConfigError("eta must be nonnegative");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
}

nlohmann::json SolverOptions::to_json() const {
  return {{"max_iters", max_iters}, {"continuation_rounds", continuation_rounds},
          {"gamma", gamma},         {"beta1", beta1},
          {"beta2", beta2},         {"eta", eta},
          {"tol", tol}};
}

SolverOptions SolverOptions::from_json(const nlohmann::json& j) {
  SolverOptions o;
  o.max_iters = j.value("max_iters", o.max_iters);
  o.continuation_rounds = j.value("continuation_rounds", o.continuation_rounds);
  o.gamma = j.value("gamma", o.gamma);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.eta = j.value("eta", o.eta);
  o.tol = j.value("tol", o.tol);
  o.validate();
  return o;
}

nlohmann::json SolveReport::to_json() const {
  return {{"iterations_used", iterations_used},
          {"final_objective", final_objective},
          {"residual_norm", residual_norm},
          {"converged", converged}};
}

double bpdn_objective(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                      double gamma, const Vector& x) {
  return W.analysis(x).lpNorm<1>() + gamma * (y - A.apply(x)).squaredNorm();
}

double analysis_tv_regulariser(const SparsityTransform& W, double beta1, double beta2,
                               const Vector& x) {
  double value = 0.0;
  if (beta1 > 0.0) value += beta1 * W.analysis(x).lpNorm<1>();
  if (beta2 > 0.0) value += beta2 * tv_value(Image(W.rows(), W.cols(), x));
  return value;
}

/* Analysis BPDN -------------------------------------------------------------- */

SolveReport solve_analysis_bpdn(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                                const SolverOptions& opts, const std::optional<Vector>& initial) {
  opts.validate();
  check_problem(A, W, y, "solve_analysis_bpdn");
  if (y.squaredNorm() == 0.0) return zero_report(A, y);

  const double norm2 = estimate_norm_squared(A) * kNormSafety;
  if (!(norm2 > 0.0)) throw NumericalError("solve_analysis_bpdn: operator has zero norm");

  double gamma = opts.gamma;
  if (gamma <= 0.0) {
    // A residual of 1e-4 ||y|| costs as much as the l1 norm of the best
    // multiple of the back-projection A^T y.
    const Vector g0 = A.apply_adjoint(y);
    const double denom = A.apply(g0).squaredNorm();
    if (!(denom > 0.0)) return zero_report(A, y);
    const double l1 = W.analysis(g0 * (g0.squaredNorm() / denom)).lpNorm<1>();
    if (!(l1 > 0.0)) return zero_report(A, y);
    gamma = kAutoGammaWeight * l1 / y.squaredNorm();
  }

  Vector x = initial ? *initial : Vector(A.apply_adjoint(y) / norm2);
  if (x.size() != A.cols()) throw DimensionError("solve_analysis_bpdn: initial point has wrong size");
  Vector Ax = A.apply(x);

  SolveReport rep;
  const int rounds = opts.continuation_rounds;
  const int per_round = std::max(1, opts.max_iters / rounds);
  bool converged = false;

  for (int round = 0; round < rounds; ++round) {
    const double g = gamma * std::pow(10.0, -(rounds - 1 - round));
    const double lip = 2.0 * g * norm2;
    auto objective = [&](const Vector& v, const Vector& Av) {
      return W.analysis(v).lpNorm<1>() + g * (Av - y).squaredNorm();
    };
    auto step = [&](const Vector& z, const Vector& Az) {
      const Vector grad = (2.0 * g) * A.apply_adjoint(Az - y);
      return Vector(W.synthesis(soft_threshold(W.analysis(z - grad / lip), 1.0 / lip)));
    };

    Vector x_prev = x;
    Vector Ax_prev = Ax;
    double f = objective(x, Ax);
    double t = 1.0;
    converged = false;
    for (int it = 0; it < per_round; ++it) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      Vector z = x + beta * (x - x_prev);
      Vector Az = Ax + beta * (Ax - Ax_prev);
      Vector x_new = step(z, Az);
      Vector Ax_new = A.apply(x_new);
      double f_new = objective(x_new, Ax_new);
      t = t_next;
      if (f_new > f) {
        // Restart from the last accepted iterate with a plain proximal step,
        // which cannot increase the objective.
        t = 1.0;
        z = x;
        x_new = step(x, Ax);
        Ax_new = A.apply(x_new);
        f_new = objective(x_new, Ax_new);
        if (f_new > f) {
          x_new = x;
          Ax_new = Ax;
          f_new = f;
        }
      }
      const double change = (x_new - z).norm();
      x_prev = std::move(x);
      Ax_prev = std::move(Ax);
      x = std::move(x_new);
      Ax = std::move(Ax_new);
      f = f_new;
      ++rep.iterations_used;
      // Gradient-mapping norm in the units of A^T(Ax - y).
      if (change * norm2 <= opts.tol * (1.0 + y.norm())) {
        converged = true;
        break;
      }
    }
    rep.final_objective = f;
  }

  rep.solution = std::move(x);
  rep.residual_norm = (y - A.apply(rep.solution)).norm();
  rep.converged = converged;
  if (!rep.solution.allFinite()) throw NumericalError("solve_analysis_bpdn: iterates diverged");
  return rep;
}

/* Analysis + TV -------------------------------------------------------------- */

Vector cgls(const LinearOperator& A, const Vector& b, int max_iters, double tol) {
  Vector x = Vector::Zero(A.cols());
  Vector r = b;
  Vector s = A.apply_adjoint(r);
  Vector p = s;
  double gamma = s.squaredNorm();
  const double gamma0 = gamma;
  if (gamma0 == 0.0) return x;
  for (int it = 0; it < max_iters; ++it) {
    const Vector q = A.apply(p);
    const double qq = q.squaredNorm();
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    x += alpha * p;
    r -= alpha * q;
    s = A.apply_adjoint(r);
    const double gamma_new = s.squaredNorm();
    if (gamma_new <= tol * tol * gamma0) break;
    p = s + (gamma_new / gamma) * p;
    gamma = gamma_new;
  }
  return x;
}

SolveReport solve_analysis_tv(const LinearOperator& A, const SparsityTransform& W, const Vector& y,
                              const SolverOptions& opts, const std::optional<Vector>& initial) {
  opts.validate();
  check_problem(A, W, y, "solve_analysis_tv");
  const Index n = A.cols();
  const Index rows = W.rows();
  const Index cols = W.cols();
  const double radius = std::sqrt(opts.eta);
  const double ynorm2 = y.squaredNorm();

  // The zero image is feasible and has no regulariser cost.
  if (ynorm2 <= opts.eta) return zero_report(A, y);

  const Preconditioned P(A);

  auto feasible = [&](double res2) {
    return res2 <= opts.eta * (1.0 + opts.tol) + opts.tol * opts.tol * ynorm2;
  };

  // Minimum-norm move onto the residual ball.
  auto correct = [&](const Vector& x, const Vector& Ax) {
    const Vector r = y - Ax;
    const double rn = r.norm();
    if (rn <= radius) return x;
    const Vector d = cgls(A, r, 300, 1e-13);
    const Vector Ad = A.apply(d);
    const double t = 1.0 - radius / rn;
    Vector xc = x + t * d;
    if (!feasible((y - Ax - t * Ad).squaredNorm())) xc = x + d;
    return xc;
  };

  const Vector y_hat = P.left(y);
  Vector x = initial ? *initial : P.apply_adjoint(y_hat);
  if (x.size() != n) throw DimensionError("solve_analysis_tv: initial point has wrong size");

  const bool use_l1 = opts.beta1 > 0.0;
  const bool use_tv = opts.beta2 > 0.0;
  const double normK2 = (use_l1 ? 1.0 : 0.0) + (use_tv ? 8.0 : 0.0) + 1.0;
  const double tau = 0.99 / std::sqrt(normK2);
  const double sigma = 0.99 / std::sqrt(normK2);

  SolveReport rep;
  Vector best;
  double best_reg = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vector& cand) {
    const double res2 = (y - A.apply(cand)).squaredNorm();
    if (!feasible(res2)) return;
    const double reg = analysis_tv_regulariser(W, opts.beta1, opts.beta2, cand);
    if (reg < best_reg) {
      best_reg = reg;
      best = cand;
    }
  };

  Vector u1 = Vector::Zero(n);
  Vector u2 = Vector::Zero(2 * n);
  Vector u3 = Vector::Zero(A.rows());
  Vector grad(2 * n);
  Vector div(n);
  const double radius_hat = radius / P.scale();

  const int rounds = opts.continuation_rounds;
  const int per_round = std::max(1, opts.max_iters / rounds);
  bool converged = false;

  for (int round = 0; round < rounds && !converged; ++round) {
    Vector Ax = P.apply(x);
    Vector x_bar = x;
    Vector Ax_bar = Ax;
    for (int it = 0; it < per_round; ++it) {
      if (use_l1) {
        u1 += sigma * W.analysis(x_bar);
        u1 = u1.cwiseMax(-opts.beta1).cwiseMin(opts.beta1);
      }
      if (use_tv) {
        tv_gradient(x_bar, rows, cols, grad);
        u2 += sigma * grad;
        project_pointwise_ball(u2, n, opts.beta2);
      }
      {
        const Vector v = u3 + sigma * Ax_bar;
        Vector w = v / sigma - y_hat;
        const double wn = w.norm();
        if (wn > radius_hat) w *= radius_hat / wn;
        u3 = v - sigma * (y_hat + w);
      }
      Vector dir = P.apply_adjoint(u3);
      if (use_l1) dir += W.synthesis(u1);
      if (use_tv) {
        tv_gradient_adjoint(u2, rows, cols, div);
        dir += div;
      }
      Vector x_new = x - tau * dir;
      const double change = (x_new - x).norm();
      x_bar = 2.0 * x_new - x;
      Ax_bar = P.apply(x_bar);
      Ax = 0.5 * (Ax_bar + Ax);
      x = std::move(x_new);
      ++rep.iterations_used;

      if ((it + 1) % 50 == 0) Ax = P.apply(x);
      if (!x.allFinite()) throw NumericalError("solve_analysis_tv: iterates diverged");
      if (change <= opts.tol * std::max(1.0, x.norm()) && feasible((y - A.apply(x)).squaredNorm())) {
        converged = true;
        break;
      }
    }
    const Vector Ax_full = A.apply(x);
    consider(x);
    consider(correct(x, Ax_full));
    if (best.size() > 0) x = best;
  }

  if (best.size() == 0) {
    rep.solution = x;
    rep.converged = false;
  } else {
    rep.solution = best;
    rep.converged = converged;
  }
  rep.final_objective = analysis_tv_regulariser(W, opts.beta1, opts.beta2, rep.solution);
  rep.residual_norm = (y - A.apply(rep.solution)).norm();
  return rep;
}

SolveReport solve_analysis_bpdn(const LinearOperator& A, const TransformSpec& spec, const Vector& y,
                                const SolverOptions& opts) {
  const Index side = square_side(A.cols());
  return solve_analysis_bpdn(A, SparsityTransform(spec, side, side), y, opts);
}

SolveReport solve_analysis_tv(const LinearOperator& A, const TransformSpec& spec, const Vector& y,
                              const SolverOptions& opts) {
  const Index side = square_side(A.cols());
  return solve_analysis_tv(A, SparsityTransform(spec, side, side), y, opts);
}

/* Certified reference solver ------------------------------------------------- */

namespace {

struct Certificate {
  bool ok = false;
  Vector c;
  Vector q;
};

// Optimality of c for 1/2||M c - y||^2 + alpha ||c||_1: q = M^T(y - Mc)/alpha
// must be a subgradient of ||.||_1 at c.
Certificate certify(const Matrix& M, const Vector& y, double alpha, const Vector& c, double tol) {
  Certificate cert;
  cert.c = c;
  cert.q = M.transpose() * (y - M * c) / alpha;
  for (Index i = 0; i < c.size(); ++i) {
    if (c[i] != 0.0) {
      const double s = c[i] > 0 ? 1.0 : -1.0;
      if (std::abs(cert.q[i] - s) > tol) return cert;
      cert.q[i] = s;
    } else {
      if (std::abs(cert.q[i]) > 1.0 + tol) return cert;
      cert.q[i] = std::clamp(cert.q[i], -1.0, 1.0);
    }
  }
  cert.ok = true;
  return cert;
}

// Exact solve of the optimality system on the support of c with its signs.
std::optional<Vector> polish(const Matrix& M, const Vector& y, double alpha, const Vector& c,
                             double support_tol) {
  std::vector<Index> support;
  for (Index i = 0; i < c.size(); ++i)
    if (std::abs(c[i]) > support_tol) support.push_back(i);
  Vector out = Vector::Zero(c.size());
  if (support.empty()) return out;
  const auto k = static_cast<Index>(support.size());
  Matrix Ms(M.rows(), k);
  Vector s(k);
  for (Index j = 0; j < k; ++j) {
    Ms.col(j) = M.col(support[static_cast<std::size_t>(j)]);
    s[j] = c[support[static_cast<std::size_t>(j)]] > 0 ? 1.0 : -1.0;
  }
  const Matrix G = Ms.transpose() * Ms;
  Eigen::FullPivLU<Matrix> lu(G);
  if (!lu.isInvertible()) return std::nullopt;
  const Vector cs = lu.solve(Vector(Ms.transpose() * y - alpha * s));
  for (Index j = 0; j < k; ++j) {
    if (cs[j] * s[j] <= 0.0) return std::nullopt;
    out[support[static_cast<std::size_t>(j)]] = cs[j];
  }
  return out;
}

}  // namespace

ReferenceSolution high_precision_reference_solve(const Matrix& A, const Matrix& W, const Vector& y,
                                                 double alpha) {
  const Index n = A.cols();
  if (n > kReferenceMaxUnknowns) {
    throw CapacityError("reference solver is limited to " + std::to_string(kReferenceMaxUnknowns) +
                        " unknowns, got " + std::to_string(n));
  }
  if (W.rows() != n || W.cols() != n) throw DimensionError("reference solver: W must be square n x n");
  if (y.size() != A.rows()) throw DimensionError("reference solver: measurement length mismatch");
  if (!(alpha >= 0.0)) throw ConfigError("reference solver: alpha must be nonnegative");
  if (!y.allFinite() || !A.allFinite() || !W.allFinite()) {
    throw NumericalError("reference solver: non-finite input");
  }

  Eigen::FullPivLU<Matrix> wlu(W);
  if (!wlu.isInvertible()) throw NumericalError("reference solver: W is not invertible");
  const Matrix W_inv = wlu.inverse();
  const double scale = std::max(1.0, (A.transpose() * y).lpNorm<Eigen::Infinity>());
  const double cert_tol = 1e-10;

  ReferenceSolution sol;
  if (alpha == 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    sol.x = cod.solve(y);
    sol.coefficients = W * sol.x;
    sol.subgradient = sol.coefficients.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
    sol.optimality_residual = (A.transpose() * (A * sol.x - y)).lpNorm<Eigen::Infinity>();
    if (sol.optimality_residual > cert_tol * scale) {
      throw NumericalError("reference solver: least-squares optimality not certified");
    }
    return sol;
  }

  const Matrix M = A * W_inv;
  Vector col_norm2(n);
  for (Index j = 0; j < n; ++j) col_norm2[j] = M.col(j).squaredNorm();

  Vector c = Vector::Zero(n);
  Vector r = y;
  const int max_sweeps = 200000;
  Certificate cert;
  int sweeps = 0;
  for (int batch = 0; batch < 40 && !cert.ok; ++batch) {
    for (int s = 0; s < max_sweeps / 40; ++s, ++sweeps) {
      double max_delta = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (col_norm2[j] == 0.0) {
          c[j] = 0.0;
          continue;
        }
        const double old = c[j];
        const double rho = old + M.col(j).dot(r) / col_norm2[j];
        const double thr = alpha / col_norm2[j];
        const double nv = rho > thr ? rho - thr : (rho < -thr ? rho + thr : 0.0);
        if (nv != old) {
          r -= (nv - old) * M.col(j);
          c[j] = nv;
          max_delta = std::max(max_delta, std::abs(nv - old));
        }
      }
      if (max_delta <= 1e-15 * (1.0 + c.lpNorm<Eigen::Infinity>())) break;
    }
    r = y - M * c;
    for (double support_tol : {0.0, 1e-12, 1e-9}) {
      if (auto p = polish(M, y, alpha, c, support_tol)) {
        cert = certify(M, y, alpha, *p, cert_tol);
        if (cert.ok) break;
      }
    }
    if (!cert.ok) {
      cert = certify(M, y, alpha, c, cert_tol);
    }
  }
  if (!cert.ok) throw NumericalError("reference solver: optimality conditions not certified");

  sol.coefficients = cert.c;
  sol.subgradient = cert.q;
  sol.x = W_inv * cert.c;
  sol.sweeps = sweeps;
  sol.optimality_residual =
      (A.transpose() * (A * sol.x - y) + alpha * W.transpose() * sol.subgradient).lpNorm<Eigen::Infinity>();
  if (sol.optimality_residual > cert_tol * scale) {
    throw NumericalError("reference solver: optimality residual above certification threshold");
  }
  return sol;
}

}  // namespace rps
